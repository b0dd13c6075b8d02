#pragma once

#include <stdexcept>
#include <string>

namespace pi0kit {

// Base class for all pi0kit failures so callers can catch one type.
class error : public std::runtime_error {
public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public error {
public:
  explicit config_error(const std::string& what) : error(what) {}
};

// Adaptive quadrature failed its tolerance within the bisection cap.
class quadrature_error : public error {
public:
  explicit quadrature_error(const std::string& what) : error(what) {}
};

class zero_variance_error : public error {
public:
  explicit zero_variance_error(const std::string& what) : error(what) {}
};

class degenerate_sample_error : public error {
public:
  explicit degenerate_sample_error(const std::string& what) : error(what) {}
};

// Mixed test families (or inconsistent df) in a batch that requires one family.
class family_mix_error : public error {
public:
  explicit family_mix_error(const std::string& what) : error(what) {}
};

// (p_bar - e_hat)/(0.5 - e_hat) with e_hat at the 0.5 boundary and p_bar < 0.5.
class degenerate_denominator_error : public error {
public:
  explicit degenerate_denominator_error(const std::string& what) : error(what) {}
};

class parse_error : public error {
public:
  explicit parse_error(const std::string& what) : error(what) {}
};

// Column labels that fail to line up with the samples (wrong count, not
// exactly two groups, or an empty group).
class label_error : public error {
public:
  explicit label_error(const std::string& what) : error(what) {}
};

}  // namespace pi0kit
