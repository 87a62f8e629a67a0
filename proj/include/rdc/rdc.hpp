#pragma once

// Umbrella header for the rate-distortion-cognition codec library.

#include "rdc/autograd.hpp"
#include "rdc/checkpoint.hpp"
#include "rdc/codec.hpp"
#include "rdc/common.hpp"
#include "rdc/config.hpp"
#include "rdc/container.hpp"
#include "rdc/contrastive.hpp"
#include "rdc/dataset.hpp"
#include "rdc/entropy.hpp"
#include "rdc/eval.hpp"
#include "rdc/gain.hpp"
#include "rdc/image.hpp"
#include "rdc/kernels.hpp"
#include "rdc/nn.hpp"
#include "rdc/rans.hpp"
#include "rdc/random.hpp"
#include "rdc/tensor.hpp"
#include "rdc/train.hpp"
#include "rdc/train_ops.hpp"
