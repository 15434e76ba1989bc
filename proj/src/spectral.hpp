#ifndef HOMOGLAB_SRC_SPECTRAL_HPP
#define HOMOGLAB_SRC_SPECTRAL_HPP

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace homoglab::detail {

using cplx = std::complex<double>;

// Tensor FFT on the periodic grid of n^dim nodes, index i0 + n i1.
// Not shareable across threads (the FFT object caches plans).
class Spectral {
 public:
  Spectral(int dim, int n);

  int dim() const { return dim_; }
  int n() const { return n_; }
  int size() const { return size_; }

  void forward(const std::vector<double>& in, std::vector<cplx>& out);
  void forward(const std::vector<cplx>& in, std::vector<cplx>& out);
  void inverse(const std::vector<cplx>& in, std::vector<double>& out);

  // Signed frequency of index i along an axis; 0 at the Nyquist index.
  int freq(int i) const { return 2 * i < n_ ? i : (2 * i == n_ ? 0 : i - n_); }
  int index(int flat, int axis) const { return axis == 0 ? flat % n_ : flat / n_; }
  // True for modes killed by every spectral derivative.
  bool null_mode(int flat) const;

  // out = d/dy_axis of the field with coefficients in.
  void derivative(const std::vector<cplx>& in, int axis, std::vector<cplx>& out) const;
  // Inverse Laplacian (zero on null modes), scaled by 1 / c.
  void inverse_laplacian(std::vector<cplx>& inout, double c) const;

 private:
  void transform(std::vector<cplx>& data, bool inverse);

  int dim_;
  int n_;
  int size_;
  Eigen::FFT<double> fft_;
  std::vector<cplx> line_in_;
  std::vector<cplx> line_out_;
};

}  // namespace homoglab::detail

#endif  // HOMOGLAB_SRC_SPECTRAL_HPP
