#include "pipevo/random.hpp"

#include <sstream>

namespace pipevo {

std::string serialize_rng(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void restore_rng(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
}

}  // namespace pipevo
