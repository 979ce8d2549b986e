#pragma once

#include <map>
#include <string>
#include <vector>

#include "petbench/common.hpp"
#include "petbench/volume.hpp"

namespace petbench {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw ValueError("unknown split");
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ValueError("unknown split label: " + s);
}

/// Aligned LT/FT slice pairs with study-level split labels. Splits are keyed
/// by study so no study can leak across train/val/test.
struct ImagePairDataset {
    std::vector<ImagePair> pairs;
    std::map<std::string, Split> split_of;

    std::vector<const ImagePair*> subset(Split s) const {
        std::vector<const ImagePair*> out;
        for (const ImagePair& p : pairs) {
            auto it = split_of.find(p.study_id);
            if (it == split_of.end())
                throw ConfigError("pair references study without a split: " + p.study_id);
            if (it->second == s) out.push_back(&p);
        }
        return out;
    }

    std::vector<ImagePair> subset_copy(Split s) const {
        std::vector<ImagePair> out;
        for (const ImagePair* p : subset(s)) out.push_back(*p);
        return out;
    }
};

inline void validate(const ImagePairDataset& ds) {
    if (ds.pairs.empty()) throw ValueError("dataset has no pairs");
    for (const ImagePair& p : ds.pairs) {
        validate(p);
        if (!ds.split_of.count(p.study_id))
            throw ConfigError("pair references study without a split: " + p.study_id);
    }
}

}  // namespace petbench
