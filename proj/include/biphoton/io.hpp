#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "biphoton/correlate.hpp"
#include "biphoton/fit.hpp"
#include "biphoton/reconstruct.hpp"

namespace biphoton {

using Json = nlohmann::ordered_json;

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

/// Serialized with explicit "units" and a "format" tag. Doubles use the
/// shortest representation that round-trips exactly.
void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);

Json to_json(const AnalyzerSetting& setting);
AnalyzerSetting analyzer_from_json(const Json& j);

Json to_json(const CoincidenceHistogram& hist);
CoincidenceHistogram histogram_from_json(const Json& j);

Json to_json(const ReconstructedTpwf& recon);
ReconstructedTpwf reconstruction_from_json(const Json& j);

Json to_json(const FitResult& fit);

}  // namespace biphoton
