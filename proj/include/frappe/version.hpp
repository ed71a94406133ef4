// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace frappe {

inline constexpr const char* kVersion = "1.0.0";
/// Bumped whenever a JSON document layout changes incompatibly.
inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

}  // namespace frappe
