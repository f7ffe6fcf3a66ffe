#include "prognos/sequence_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <map>
#include <sstream>

#include "prognos/errors.hpp"
#include "prognos/file_util.hpp"

namespace prognos {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& field, int row) {
  double value = 0.0;
  const std::string t = trim(field);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw InvalidInputError("row " + std::to_string(row) + ": cannot parse number '" + field +
                            "'");
  }
  return value;
}

std::int64_t parse_step(const std::string& field, int row) {
  std::int64_t value = 0;
  const std::string t = trim(field);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw InvalidInputError("row " + std::to_string(row) + ": cannot parse step '" + field +
                            "'");
  }
  return value;
}

}  // namespace

std::vector<ObservationSequence> parse_sequences_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("empty sequence file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || trim(header.front()) != "asset_id" || trim(header[1]) != "step" ||
      trim(header.back()) != "endlabel") {
    throw InvalidInputError(
        "row 1: header must be 'asset_id,step,<sensor columns...>,endlabel'");
  }
  const int dim = static_cast<int>(header.size()) - 3;
  if (dim < 1) throw InvalidInputError("row 1: no sensor columns");

  std::vector<std::string> order;
  std::map<std::string, ObservationSequence> by_asset;
  std::map<std::string, int> last_row_of;

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw InvalidInputError("row " + std::to_string(row) + ": expected " +
                              std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
    }
    const std::string asset = trim(fields.front());
    if (asset.empty()) throw InvalidInputError("row " + std::to_string(row) + ": empty asset_id");

    auto [it, inserted] = by_asset.try_emplace(asset);
    if (inserted) {
      it->second.id = asset;
      order.push_back(asset);
    }
    ObservationSequence& seq = it->second;

    const std::int64_t step = parse_step(fields[1], row);
    if (!seq.times.empty() && step <= seq.times.back()) {
      throw InvalidInputError("row " + std::to_string(row) + ": steps of asset '" + asset +
                              "' must increase strictly");
    }
    if (!seq.times.empty() && last_row_of[asset] > 0) {
      // a previous row carried the endlabel and claimed to be final
      throw InvalidInputError("row " + std::to_string(row) + ": asset '" + asset +
                              "' continues after its endlabel row");
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    Mask mask = none_observed(dim);
    for (int d = 0; d < dim; ++d) {
      const std::string& cell = fields[static_cast<std::size_t>(d) + 2];
      if (trim(cell).empty()) continue;
      x[d] = parse_double(cell, row);
      mask[static_cast<std::size_t>(d)] = 1;
    }
    seq.times.push_back(step);
    seq.obs.push_back(std::move(x));
    seq.masks.push_back(std::move(mask));

    const std::string label = trim(fields.back());
    if (!label.empty()) {
      if (label == "failed") {
        seq.end_label = EndLabel::Failed;
      } else if (label == "censored") {
        seq.end_label = EndLabel::Censored;
      } else {
        throw InvalidInputError("row " + std::to_string(row) + ": endlabel must be 'failed' or "
                                "'censored', found '" + label + "'");
      }
      last_row_of[asset] = row;
    }
  }
  if (order.empty()) throw InvalidInputError("sequence file has no data rows");

  std::vector<ObservationSequence> out;
  out.reserve(order.size());
  for (const std::string& asset : order) {
    if (last_row_of.find(asset) == last_row_of.end()) {
      throw InvalidInputError("asset '" + asset + "': final row is missing its endlabel");
    }
    out.push_back(by_asset[asset].densified());
  }
  return out;
}

std::vector<ObservationSequence> read_sequences_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  return parse_sequences_csv(in);
}

std::string sequences_to_csv(const std::vector<ObservationSequence>& sequences) {
  if (sequences.empty()) throw InvalidInputError("no sequences to write");
  const int dim = sequences.front().dim();
  std::ostringstream out;
  out << "asset_id,step";
  for (int d = 0; d < dim; ++d) out << ",s" << d;
  out << ",endlabel\n";
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const ObservationSequence& seq = sequences[s];
    seq.check();
    if (seq.dim() != dim) throw InvalidInputError("sequences disagree on sensor dimension");
    const std::string id = seq.id.empty() ? "asset" + std::to_string(s) : seq.id;
    for (int t = 0; t < seq.length(); ++t) {
      out << id << ',' << seq.times[static_cast<std::size_t>(t)];
      for (int d = 0; d < dim; ++d) {
        out << ',';
        if (seq.masks[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)]) {
          out << format_double(seq.obs[static_cast<std::size_t>(t)][d]);
        }
      }
      out << ',';
      if (t == seq.length() - 1) out << end_label_name(seq.end_label);
      out << '\n';
    }
  }
  return out.str();
}

void write_sequences_csv(const std::string& path,
                         const std::vector<ObservationSequence>& sequences) {
  atomic_write_text(path, sequences_to_csv(sequences));
}

}  // namespace prognos
