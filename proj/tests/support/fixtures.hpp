#pragma once

#include <string>

#include "gridsync/gridsync.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(GRIDSYNC_DATA_DIR) + "/" + name; }

/// Generator P=+1, load P=-1, one line K=11, alpha=0.8, I=10, gamma=1.
inline gridsync::PowerGrid t2() {
    using namespace gridsync;
    return PowerGrid({{NodeKind::Generator, 1.0, 10.0, 1.0}, {NodeKind::Load, -1.0, 10.0, 1.0}}, {{0, 1, 11.0, 0.8}});
}

/// Star: generator P=+2 at the center, two loads P=-1, K=11.
inline gridsync::PowerGrid t3() {
    using namespace gridsync;
    return PowerGrid({{NodeKind::Generator, 2.0, 10.0, 1.0},
                      {NodeKind::Load, -1.0, 10.0, 1.0},
                      {NodeKind::Load, -1.0, 10.0, 1.0}},
                     {{0, 1, 11.0, 0.8}, {0, 2, 11.0, 0.8}});
}

inline gridsync::PowerGrid corridor9() { return gridsync::io::load_grid(data_path("corridor9.grid")); }

}  // namespace fixtures
