// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "swgan/binary_io.hpp"
#include "swgan/checkpoint.hpp"
#include "swgan/config.hpp"
#include "swgan/error.hpp"
#include "swgan/gradcheck.hpp"
#include "swgan/image.hpp"
#include "swgan/layers.hpp"
#include "swgan/losses.hpp"
#include "swgan/masking.hpp"
#include "swgan/metrics.hpp"
#include "swgan/model.hpp"
#include "swgan/ops.hpp"
#include "swgan/rng.hpp"
#include "swgan/run.hpp"
#include "swgan/tensor.hpp"
#include "swgan/trainer.hpp"
