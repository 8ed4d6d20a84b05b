#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "diagmeta/service.hpp"

namespace {
diagmeta::Service* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}
}  // namespace

int main(int argc, char** argv) {
  diagmeta::ServiceConfig cfg;
  CLI::App app{"diagmeta HTTP service", "diagmeta-serve"};
  app.add_option("--host", cfg.host, "bind address");
  app.add_option("--port", cfg.port, "port (0 picks a free one)");
  app.add_option("--workers", cfg.workers, "concurrent fit slots")->check(CLI::PositiveNumber);
  app.add_option("--fit-threads", cfg.fit_threads, "threads per fit")->check(CLI::PositiveNumber);
  app.add_option("--session-ttl", cfg.session_ttl, "idle seconds before a session expires");
  app.add_option("--persist-dir", cfg.persist_dir, "write finished fits as JSON here");
  app.add_option("--cors-origin", cfg.cors_origin, "Access-Control-Allow-Origin value");
  CLI11_PARSE(app, argc, argv);

  try {
    diagmeta::Service service(cfg);
    const int port = service.bind();
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
    service.listen();
    g_service = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
