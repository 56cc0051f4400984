#pragma once

// Umbrella header for the humocon library.

#include "humocon/align/alignment.hpp"
#include "humocon/cli/export.hpp"
#include "humocon/core/graph.hpp"
#include "humocon/core/ops.hpp"
#include "humocon/core/rng.hpp"
#include "humocon/core/serialize.hpp"
#include "humocon/core/tensor.hpp"
#include "humocon/eval/evalsuite.hpp"
#include "humocon/losses/info.hpp"
#include "humocon/nn/backbones.hpp"
#include "humocon/nn/modules.hpp"
#include "humocon/synth/dataset.hpp"
#include "humocon/synth/synth.hpp"
#include "humocon/train/trainer.hpp"
#include "humocon/vq/codebook.hpp"
