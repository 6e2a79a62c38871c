// Copyright 2026 The stratalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "stratalign/cli/app.hpp"

int main(int argc, char** argv) { return stratalign::cli::run(argc, argv); }
