#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stcl {

using Shape = std::vector<std::size_t>;

// Error taxonomy. The CLI maps config_error to exit code 2 and
// numeric_error to exit code 3; everything else is treated as numeric/IO.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class dim_error : public error {
 public:
  using error::error;
};

class config_error : public error {
 public:
  using error::error;
};

class numeric_error : public error {
 public:
  using error::error;
};

class data_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw dim_error(std::string(op) + ": shape mismatch " + shape_str(a) +
                    " vs " + shape_str(b));
  }
}

}  // namespace stcl
