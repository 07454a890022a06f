// Fits the augmented estimator to a small two-phase study built in memory:
// a cheap noisy measurement (bp_s, outcome_s) on everyone, the accurate one
// (bp, outcome) on a random fifth of the rows.

#include <cstdio>
#include <sstream>

#include "augreg/csv.hpp"
#include "augreg/pipeline.hpp"
#include "augreg/rng.hpp"
#include "augreg/spec_json.hpp"

namespace {

std::string make_csv(std::uint64_t seed, int n) {
  augreg::CounterRng rng(seed);
  std::ostringstream out;
  augreg::write_csv_row(out, {"id", "validated", "outcome", "outcome_s", "bp", "bp_s", "age"});
  for (int i = 0; i < n; ++i) {
    const double age = 50.0 + 10.0 * rng.normal();
    const double bp = 120.0 + 0.4 * (age - 50.0) + 12.0 * rng.normal();
    const double outcome = 1.0 + 0.03 * bp + 0.02 * age + rng.normal();
    const bool validated = rng.bernoulli(0.2);
    using augreg::format_double;
    augreg::write_csv_row(out, {std::to_string(i), validated ? "1" : "0", validated ? format_double(outcome) : "NA",
                                format_double(0.5 + 0.9 * outcome + 0.4 * rng.normal()),
                                validated ? format_double(bp) : "NA", format_double(bp + 8.0 * rng.normal()),
                                format_double(age)});
  }
  return out.str();
}

const char* kSpec = R"({
  "schema_version": 1,
  "family": "linear",
  "outcome": {"reference": "outcome", "surrogate": "outcome_s"},
  "predictors": [
    {"reference": "bp", "surrogates": ["bp_s"]},
    {"reference": "age", "surrogates": [], "perfect": true}
  ],
  "validation": "validated",
  "resample": {"method": "jackknife", "groups": 200}
})";

void print(const char* name, const augreg::WaldTable& table) {
  std::printf("%s\n", name);
  for (const auto& r : table) {
    std::printf("  %-12s %9.4f  se %7.4f  [%8.4f, %8.4f]\n", r.term.c_str(), r.estimate, r.se, r.lcl, r.ucl);
  }
}

}  // namespace

int main() {
  try {
    const augreg::AnalysisSpec spec = augreg::spec_from_json(augreg::Json::parse(kSpec));
    const auto loaded = augreg::load_study(augreg::parse_csv(make_csv(42, 2000)), spec);
    const auto result = augreg::run_analysis(loaded.data, spec);
    std::printf("n_full %td, n_val %td\n\n", static_cast<std::ptrdiff_t>(loaded.data.n_full()),
                static_cast<std::ptrdiff_t>(loaded.data.n_val()));
    print("validation only", result.estimate.val);
    print("augmented", result.estimate.aug);
    print("surrogate model, all rows", result.estimate.ful);
  } catch (const augreg::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
