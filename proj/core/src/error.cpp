#include "fmd/error.hpp"

// Error is header-only; this translation unit anchors the vtable.
namespace fmd {
namespace {
[[maybe_unused]] const Error* anchor = nullptr;
}
}  // namespace fmd
