#pragma once

#include <stdexcept>
#include <string>

namespace panelfx {

// Error categories map 1:1 onto CLI exit codes (config 2, data 3,
// estimation 4).
enum class ErrorKind { config = 2, data = 3, estimation = 4 };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& m) { return {ErrorKind::config, m}; }
inline Error data_error(const std::string& m) { return {ErrorKind::data, m}; }
inline Error estimation_error(const std::string& m) {
    return {ErrorKind::estimation, m};
}

}  // namespace panelfx
