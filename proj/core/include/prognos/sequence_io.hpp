#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "prognos/tmhmm.hpp"

namespace prognos {

/// CSV layout: header `asset_id,step,<sensor columns...>,endlabel`.
/// Empty sensor cells are missing values; endlabel is present only on each
/// asset's final row (`failed` or `censored`). Steps must increase strictly
/// per asset; gaps are loaded as fully masked steps.
std::vector<ObservationSequence> parse_sequences_csv(std::istream& in);
std::vector<ObservationSequence> read_sequences_csv(const std::string& path);

std::string sequences_to_csv(const std::vector<ObservationSequence>& sequences);
void write_sequences_csv(const std::string& path,
                         const std::vector<ObservationSequence>& sequences);

}  // namespace prognos
