// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace hublab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hublab
