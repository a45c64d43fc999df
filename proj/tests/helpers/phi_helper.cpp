// External estimation procedure for CLI tests. Reads the prefix CSV, a blank line and
// query points from stdin; prints `x value` per query.
//   phi_helper constant <c>
//   phi_helper histogram
//   phi_helper fail
#include <iostream>
#include <sstream>
#include <string>

#include "stablereg/io.hpp"

using namespace stablereg;

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "constant";
  if (mode == "fail") return 7;
  std::stringstream csv;
  std::string line;
  while (std::getline(std::cin, line) && !line.empty()) csv << line << '\n';
  const auto prefix = io::read_sequence_csv(csv);
  const auto fit = mode == "histogram" ? histogram_procedure().fit(prefix) : constant_procedure(argc > 2 ? std::stod(argv[2]) : 0.5).fit(prefix);
  std::string out;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    out += line;
    out += ' ';
    out += io::format_double(fit.eval(io::parse_double(line, "query")));
    out += '\n';
  }
  std::cout << out;
  return 0;
}
