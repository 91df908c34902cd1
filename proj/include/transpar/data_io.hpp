#pragma once

// CSV + JSON sidecar files written by `gen-data` and read back by `eval`.

#include "transpar/data.hpp"

#include <cstdint>
#include <string>

namespace transpar::data {

/// One file per domain with header `x0,x1,y,d,split`, rows of the train split first.
void write_domain_csv(const DomainSplits& splits, const std::string& path);
/// Reads a file written by write_domain_csv. Throws ConfigError on malformed input.
DomainSplits read_domain_csv(const std::string& path);

/// Writes source.csv, target.csv and metadata.json into `dir` (created if needed).
void write_generated(const GeneratedData& data, const ShiftScenario& scenario, std::uint64_t seed,
                     const std::string& dir);

}  // namespace transpar::data
