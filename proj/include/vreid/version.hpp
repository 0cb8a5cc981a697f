#ifndef VREID_VERSION_HPP
#define VREID_VERSION_HPP

#include <string>

namespace vreid {

// key=value lines: toolkit version plus the binary format versions, embedded
// in every saved report.
std::string version_info();

}  // namespace vreid

#endif  // VREID_VERSION_HPP
