#include "crowdsig/error.hpp"

namespace crowdsig {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::schema: return "schema";
    case Errc::duplicate_key: return "duplicate_key";
    case Errc::parse: return "parse";
    case Errc::range: return "range";
    case Errc::domain: return "domain";
    case Errc::empty_panel: return "empty_panel";
    case Errc::empty_result: return "empty_result";
    case Errc::unsupported: return "unsupported";
    case Errc::size_limit: return "size_limit";
    case Errc::incomplete_moments: return "incomplete_moments";
    case Errc::degenerate: return "degenerate";
    case Errc::linalg: return "linalg";
    case Errc::stationarity: return "stationarity";
    case Errc::no_feasible_periods: return "no_feasible_periods";
    case Errc::io: return "io";
  }
  return "unknown";
}

}  // namespace crowdsig
