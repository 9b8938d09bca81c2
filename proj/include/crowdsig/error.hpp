#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdsig {

enum class Errc {
  schema,
  duplicate_key,
  parse,
  range,
  domain,
  empty_panel,
  empty_result,
  unsupported,
  size_limit,
  incomplete_moments,
  degenerate,
  linalg,
  stationarity,
  no_feasible_periods,
  io,
};

std::string_view errc_name(Errc code) noexcept;

/// Library-wide exception. The code lets callers and the CLI map failures to
/// exit codes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace crowdsig
