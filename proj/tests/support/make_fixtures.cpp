// Regenerates tests/fixtures/ from the scripted sessions.
//   make_fixtures [OUTPUT_DIR]

#include <iostream>

#include "scripted.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : mcisim::testing::fixture_dir();
  for (const auto& run : mcisim::testing::all_scripted_runs()) {
    mcisim::testing::write_fixture(run, root);
    std::cout << run.name << ": accuracy " << run.report.accuracy << ", "
              << run.report.overtriage_count << " over, " << run.report.undertriage_count
              << " under, " << run.report.untagged_count << " untagged\n";
  }
}
