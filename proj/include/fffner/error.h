#ifndef FFFNER_ERROR_H_
#define FFFNER_ERROR_H_

#include <stdexcept>
#include <string>

namespace fffner {

// Broad error categories. The CLI maps each one to a distinct exit code.
enum class ErrorCategory { kUsage, kData, kDivergence };

// All library errors carry a category and a short machine-readable kind
// ("EmptyInput", "DanglingInside", ...) in addition to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string &message)
      : std::runtime_error(kind + ": " + message),
        category_(category),
        kind_(std::move(kind)) {}

  ErrorCategory category() const { return category_; }
  const std::string &kind() const { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

inline Error DataError(std::string kind, const std::string &message) {
  return Error(ErrorCategory::kData, std::move(kind), message);
}

inline Error UsageError(std::string kind, const std::string &message) {
  return Error(ErrorCategory::kUsage, std::move(kind), message);
}

// Raised when a loss or gradient stops being finite during training.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string &message)
      : Error(ErrorCategory::kDivergence, "DivergedAtEpoch",
              "epoch " + std::to_string(epoch) + ": " + message),
        epoch_(epoch) {}

  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace fffner

#endif  // FFFNER_ERROR_H_
