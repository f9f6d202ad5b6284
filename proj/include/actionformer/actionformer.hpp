// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#ifndef ACTIONFORMER_ACTIONFORMER_HPP
#define ACTIONFORMER_ACTIONFORMER_HPP

#include "actionformer/checkpoint.hpp"
#include "actionformer/config.hpp"
#include "actionformer/data.hpp"
#include "actionformer/error.hpp"
#include "actionformer/eval.hpp"
#include "actionformer/gradcheck.hpp"
#include "actionformer/loss.hpp"
#include "actionformer/model.hpp"
#include "actionformer/ops.hpp"
#include "actionformer/optim.hpp"
#include "actionformer/postprocess.hpp"
#include "actionformer/profile.hpp"
#include "actionformer/synthetic.hpp"
#include "actionformer/targets.hpp"
#include "actionformer/tensor.hpp"
#include "actionformer/trainer.hpp"
#include "actionformer/types.hpp"

#endif  // ACTIONFORMER_ACTIONFORMER_HPP
