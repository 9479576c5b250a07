#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "partloc/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"partloc: part localization with geometric priors"};
  app.require_subcommand(1);
  partloc::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const partloc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
