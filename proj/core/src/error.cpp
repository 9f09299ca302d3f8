#include "stealthlink/error.hpp"

namespace stealthlink {

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& detail)
    : Error(file + ":" + std::to_string(line) + ": " + detail, ExitCode::data), line_(line) {}

NumericalRankError::NumericalRankError(std::size_t achieved, std::size_t requested)
    : Error("numerical rank " + std::to_string(achieved) + " is below the requested " +
                std::to_string(requested) + " components",
            ExitCode::data),
      achieved_(achieved) {}

DivergenceError::DivergenceError(const std::string& stage, std::size_t last_finite_epoch)
    : Error(stage + " diverged (non-finite loss); last finite epoch " +
                std::to_string(last_finite_epoch),
            ExitCode::divergence),
      last_finite_epoch_(last_finite_epoch) {}

}  // namespace stealthlink
