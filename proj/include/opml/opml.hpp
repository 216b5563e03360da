#pragma once

#include <opml/hash.hpp>
#include <opml/merkle.hpp>
#include <opml/preimage.hpp>
#include <opml/rng.hpp>

#include <opml/fpvm/layout.hpp>
#include <opml/fpvm/isa.hpp>
#include <opml/fpvm/vm.hpp>
#include <opml/fpvm/witness.hpp>

#include <opml/ml/tensor.hpp>
#include <opml/ml/ops.hpp>
#include <opml/ml/graph.hpp>
#include <opml/ml/lowering.hpp>
#include <opml/ml/engine.hpp>
#include <opml/ml/fixtures.hpp>

#include <opml/dispute/chain.hpp>
#include <opml/dispute/protocol.hpp>
#include <opml/dispute/actors.hpp>
#include <opml/dispute/transcript.hpp>
#include <opml/dispute/game.hpp>
#include <opml/dispute/harness.hpp>

#include <opml/multiphase/checks.hpp>
#include <opml/multiphase/game.hpp>

#include <opml/economics.hpp>
