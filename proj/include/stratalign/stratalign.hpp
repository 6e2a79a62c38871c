// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "stratalign/align/trainer.hpp"
#include "stratalign/data/synth.hpp"
#include "stratalign/eval/export.hpp"
#include "stratalign/eval/regression.hpp"
#include "stratalign/eval/report.hpp"
#include "stratalign/eval/retrieval.hpp"
#include "stratalign/eval/sweep.hpp"
