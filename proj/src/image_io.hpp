/* Copyright 2026 The dfnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// PNG helpers shared by the data and evaluation code.

#pragma once

#include <filesystem>

#include "dfnet/tensor.hpp"

namespace dfnet::data {

/// 16-bit PNG holding round(scale / depth); zero where depth <= 0.
void write_inverse_depth_png(const std::filesystem::path& path,
                             const Tensor& depth, double scale);
/// Inverse of write_inverse_depth_png; zero pixels decode to depth 0.
Tensor read_inverse_depth_png(const std::filesystem::path& path, double scale);

/// 8-bit 0/255 mask.
void write_mask_png(const std::filesystem::path& path, const Tensor& mask);
Tensor read_mask_png(const std::filesystem::path& path);

}  // namespace dfnet::data
