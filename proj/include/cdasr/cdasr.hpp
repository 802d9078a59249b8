#pragma once

// Everything at once; prefer the individual headers in library code.

#include "cdasr/cli/commands.hpp"
#include "cdasr/cli/run_config.hpp"
#include "cdasr/core/aligned.hpp"
#include "cdasr/core/archive.hpp"
#include "cdasr/core/array_set.hpp"
#include "cdasr/core/csv.hpp"
#include "cdasr/core/error.hpp"
#include "cdasr/core/log.hpp"
#include "cdasr/core/random.hpp"
#include "cdasr/core/tensor.hpp"
#include "cdasr/data/dataset.hpp"
#include "cdasr/data/image.hpp"
#include "cdasr/data/image_io.hpp"
#include "cdasr/data/resample.hpp"
#include "cdasr/encoder/embedding.hpp"
#include "cdasr/encoder/encoder.hpp"
#include "cdasr/encoder/spec.hpp"
#include "cdasr/encoder/stub_encoder.hpp"
#include "cdasr/encoder/vit_encoder.hpp"
#include "cdasr/loss/losses.hpp"
#include "cdasr/loss/perceptual.hpp"
#include "cdasr/meta/meta_adapter.hpp"
#include "cdasr/metrics/domain_gap.hpp"
#include "cdasr/metrics/mmd.hpp"
#include "cdasr/metrics/quality.hpp"
#include "cdasr/metrics/tsne.hpp"
#include "cdasr/model/config.hpp"
#include "cdasr/model/network.hpp"
#include "cdasr/nn/layers.hpp"
#include "cdasr/nn/pooling.hpp"
#include "cdasr/train/adam.hpp"
#include "cdasr/train/checkpoint.hpp"
#include "cdasr/train/trainer.hpp"
