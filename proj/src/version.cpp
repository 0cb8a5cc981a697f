#include "vreid/version.hpp"

namespace vreid {

std::string version_info() {
  return "toolkit=vreid 0.1.0\n"
         "format_embedding=RFEB v1\n"
         "format_checkpoint=RFHD v1\n"
         "rng=splitmix64+box-muller v1\n";
}

}  // namespace vreid
