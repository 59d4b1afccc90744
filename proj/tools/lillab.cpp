#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lillab/error.hpp"
#include "lillab/report.hpp"

namespace {

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json load_config(const std::string& path) {
  if (path == "-") return nlohmann::json::parse(std::cin);
  std::ifstream in(path);
  if (!in) throw lillab::ValidationError("cannot open config file " + path);
  return nlohmann::json::parse(in);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw lillab::ValidationError("cannot write to " + out_path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification lab for long-run fluctuations of path averages"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string format = "json";
  std::uint64_t seed_flag = 0;
  int threads = 0;
  bool stamp = false;

  CLI::App* chosen = nullptr;
  for (const auto& name : lillab::report::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config path, or - for stdin")
        ->required();
    sub->add_option("--seed", seed_flag,
                    "override the run seed (beats LILLAB_SEED and the config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores");
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    sub->add_option("--format", format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--stamp", stamp, "append a generated_at field to json output");
    sub->callback([&chosen, sub] { chosen = sub; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    nlohmann::json config = load_config(config_path);
    if (chosen->count("--seed") > 0) {
      config["seed"] = seed_flag;
    } else if (const char* env = std::getenv("LILLAB_SEED")) {
      try {
        config["seed"] = static_cast<std::uint64_t>(std::stoull(env));
      } catch (const std::exception&) {
        throw lillab::ValidationError("LILLAB_SEED is not an unsigned integer");
      }
    }

    const auto report =
        lillab::report::run_command(chosen->get_name(), config, threads);

    std::string text;
    if (format == "csv") {
      text = lillab::report::to_csv(report);
    } else {
      auto stamped = report;
      if (stamp) stamped["generated_at"] = now_utc();
      text = stamped.dump(2) + "\n";
    }
    emit(text, out_path);
    return report.value("passed", false) ? 0 : 2;
  } catch (const lillab::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const lillab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
}
