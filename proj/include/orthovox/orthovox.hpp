// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orthovox/adam.hpp"
#include "orthovox/bench.hpp"
#include "orthovox/config.hpp"
#include "orthovox/geometry.hpp"
#include "orthovox/hdn.hpp"
#include "orthovox/io.hpp"
#include "orthovox/jln.hpp"
#include "orthovox/layers.hpp"
#include "orthovox/metrics.hpp"
#include "orthovox/model.hpp"
#include "orthovox/network.hpp"
#include "orthovox/pipeline.hpp"
#include "orthovox/synth.hpp"
#include "orthovox/tensor.hpp"
#include "orthovox/train.hpp"
#include "orthovox/util.hpp"
#include "orthovox/volume.hpp"
