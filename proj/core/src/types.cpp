#include "streamqc/types.hpp"

#include <stdexcept>

namespace streamqc {

std::string partition_name(Partition p) {
    switch (p) {
        case Partition::kTrain: return "train";
        case Partition::kValidation: return "validation";
        case Partition::kTest: return "test";
        case Partition::kExternal: return "external";
    }
    return "?";
}

Partition partition_from_name(const std::string& name) {
    if (name == "train") return Partition::kTrain;
    if (name == "validation") return Partition::kValidation;
    if (name == "test") return Partition::kTest;
    if (name == "external") return Partition::kExternal;
    throw std::invalid_argument("unknown partition: '" + name + "'");
}

}  // namespace streamqc
