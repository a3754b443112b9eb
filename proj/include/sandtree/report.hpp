#pragma once

// Experiment reports: parameters, CSV tables and pass/fail conclusions,
// emitted as JSON or as concatenated CSV blocks. Output is a pure function
// of the parameters (which carry the seed), so re-running from a report's
// own params reproduces it byte for byte.

#include "sandtree/exact.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace sandtree {

inline constexpr const char* kVersion = "sandtree 1.0.0";

// 17 significant digits round-trip any double.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  CsvTable(std::string name, std::vector<std::string> header) : name_(std::move(name)), header_(std::move(header)) {}

  struct Cell {
    std::string text;
    Cell(double v) : text(fmt17(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(long v) : text(std::to_string(v)) {}
    Cell(long long v) : text(std::to_string(v)) {}
    Cell(unsigned long v) : text(std::to_string(v)) {}
    Cell(unsigned long long v) : text(std::to_string(v)) {}
    Cell(const Rational& q) : text(to_fraction_string(q)) {}
    Cell(const BigInt& z) : text(z.str()) {}
    Cell(std::string s) : text(std::move(s)) {}
    Cell(const char* s) : text(s) {}
  };

  void add(std::vector<Cell> row) {
    if (row.size() != header_.size()) throw std::invalid_argument("row width does not match header of " + name_);
    std::vector<std::string> r;
    r.reserve(row.size());
    for (auto& c : row) r.push_back(std::move(c.text));
    rows_.push_back(std::move(r));
  }

  const std::string& name() const { return name_; }
  std::size_t rows() const { return rows_.size(); }

  std::string csv() const {
    std::ostringstream os;
    line(os, header_);
    for (const auto& r : rows_) line(os, r);
    return os.str();
  }

 private:
  static void line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }

  std::string name_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Conclusion {
  std::string claim;
  std::string ref;  // which stated result the check exercises
  bool pass = false;
  double value = 0;
  double tol = 0;
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::vector<CsvTable> tables;
  std::vector<Conclusion> conclusions;
  std::vector<std::string> notes;  // truncations and other caveats

  CsvTable& table(std::string name, std::vector<std::string> header) {
    tables.emplace_back(std::move(name), std::move(header));
    return tables.back();
  }

  void conclude(std::string claim, std::string ref, bool pass, double value, double tol) {
    conclusions.push_back({std::move(claim), std::move(ref), pass, value, tol});
  }

  bool all_pass() const {
    for (const auto& c : conclusions) {
      if (!c.pass) return false;
    }
    return true;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["version"] = kVersion;
    j["params"] = params;
    j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : tables) j["tables"].push_back({{"name", t.name()}, {"csv", t.csv()}});
    j["conclusions"] = nlohmann::ordered_json::array();
    for (const auto& c : conclusions) {
      // values travel as strings so the 17-digit form survives
      j["conclusions"].push_back(
          {{"claim", c.claim}, {"ref", c.ref}, {"pass", c.pass}, {"value", fmt17(c.value)}, {"tol", fmt17(c.tol)}});
    }
    j["notes"] = notes;
    return j;
  }

  std::string to_json_text() const { return to_json().dump(2) + "\n"; }

  // "# key: value" header lines, then one block per table separated by a
  // blank line, then the conclusions as a final table.
  std::string to_csv_text() const {
    std::ostringstream os;
    os << "# experiment: " << experiment << "\n# version: " << kVersion << "\n# params: " << params.dump() << "\n";
    for (const auto& n : notes) os << "# note: " << n << "\n";
    for (const auto& t : tables) os << "\n# table: " << t.name() << "\n" << t.csv();
    os << "\n# table: conclusions\nclaim,ref,pass,value,tol\n";
    for (const auto& c : conclusions) {
      os << '"' << c.claim << "\",\"" << c.ref << "\"," << (c.pass ? "true" : "false") << ',' << fmt17(c.value)
         << ',' << fmt17(c.tol) << '\n';
    }
    return os.str();
  }
};

}  // namespace sandtree
