// Child process for the external-scorer protocol tests.
//   fake_scorer            score = share of query words present in the doc
//   fake_scorer garbage    answers with a line that is not JSON
//   fake_scorer range      answers with score 1.5
//   fake_scorer silent     never answers
#include <chrono>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "json.hpp"

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "";
  std::string line;
  while (std::getline(std::cin, line)) {
    const auto req = nlohmann::json::parse(line);
    if (mode == "silent") {
      std::this_thread::sleep_for(std::chrono::seconds(30));
      return 0;
    }
    if (mode == "garbage") {
      std::cout << "not json" << std::endl;
      continue;
    }
    double score = 1.5;
    if (mode != "range") {
      std::set<std::string> doc;
      std::istringstream d(req.at("doc").get<std::string>());
      for (std::string w; d >> w;) doc.insert(w);
      std::istringstream q(req.at("query").get<std::string>());
      int total = 0, hit = 0;
      for (std::string w; q >> w; ++total) hit += doc.count(w) ? 1 : 0;
      score = total ? static_cast<double>(hit) / total : 0.0;
      if (!req.at("adapter").is_null()) score = 1.0 - score;
    }
    std::cout << nlohmann::json{{"id", req.at("id")}, {"score", score}}.dump() << std::endl;
  }
}
