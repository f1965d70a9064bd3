#pragma once

namespace bnn {

// Build identification for run manifests ("unknown" when git metadata was
// unavailable at configure time).
const char* git_describe();
const char* version();

}  // namespace bnn
