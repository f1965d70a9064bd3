#include "bnn/version.hpp"

#ifndef BNN_GIT_DESCRIBE
#define BNN_GIT_DESCRIBE "unknown"
#endif

namespace bnn {

const char* git_describe() {
    return BNN_GIT_DESCRIBE;
}

const char* version() {
    return "0.1.0";
}

}  // namespace bnn
