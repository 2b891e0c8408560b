// Reference worker: serves the line protocol on stdin/stdout with a planted generator.
#include <iostream>

#include <CLI11.hpp>

#include "hierprobe/reference_worker.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Planted-generator worker speaking the line-delimited JSON protocol."};
  std::string planted;
  hierprobe::FaultPlan faults;
  app.add_option("--planted", planted, "Planted spec or options file")->required();
  app.add_option("--stall-on", faults.stall_on, "Never answer request n");
  app.add_option("--garbage-on", faults.garbage_on, "Answer request n with a non-JSON line");
  app.add_option("--out-of-range-on", faults.out_of_range_on, "Report a score of 1.7 for request n");
  app.add_option("--wrong-id-on", faults.wrong_id_on, "Echo the wrong id for request n");
  app.add_option("--exit-on", faults.exit_on, "Exit when request n arrives");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto generator = hierprobe::load_planted(hierprobe::read_json_file(planted));
    std::ios::sync_with_stdio(false);
    return hierprobe::serve_planted(std::cin, std::cout, generator, faults);
  } catch (const std::exception& e) {
    std::cerr << "planted_worker: " << e.what() << "\n";
    return 2;
  }
}
