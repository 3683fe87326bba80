#include "lsgc/tensor.hpp"

#include <mutex>
#include <sstream>

namespace lsgc::num {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {
struct Fault {
  std::mutex mu;
  std::string op;
  double factor = 1.0;
};
Fault& fault() {
  static Fault f;
  return f;
}
}  // namespace

namespace testing {
void set_adjoint_fault(std::string op, double factor) {
  std::lock_guard lock(fault().mu);
  fault().op = std::move(op);
  fault().factor = factor;
}
void clear_adjoint_fault() { set_adjoint_fault({}, 1.0); }
}  // namespace testing

namespace detail {
bool adjoint_fault_for(std::string_view op, double& factor) {
  auto& f = fault();
  std::lock_guard lock(f.mu);
  if (f.op.empty() || f.op != op) return false;
  factor = f.factor;
  return true;
}
}  // namespace detail

template class Tape<float>;
template class Tape<double>;

}  // namespace lsgc::num
