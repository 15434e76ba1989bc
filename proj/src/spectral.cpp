#include "spectral.hpp"

#include "homoglab/core.hpp"

namespace homoglab::detail {

Spectral::Spectral(int dim, int n) : dim_(dim), n_(n), size_(dim == 1 ? n : n * n) {
  line_in_.resize(n);
  line_out_.resize(n);
}

void Spectral::transform(std::vector<cplx>& data, bool inverse) {
  for (int row = 0; row < (dim_ == 1 ? 1 : n_); ++row) {
    for (int i = 0; i < n_; ++i) line_in_[i] = data[row * n_ + i];
    if (inverse) {
      fft_.inv(line_out_, line_in_);
    } else {
      fft_.fwd(line_out_, line_in_);
    }
    for (int i = 0; i < n_; ++i) data[row * n_ + i] = line_out_[i];
  }
  if (dim_ == 1) return;
  for (int col = 0; col < n_; ++col) {
    for (int i = 0; i < n_; ++i) line_in_[i] = data[i * n_ + col];
    if (inverse) {
      fft_.inv(line_out_, line_in_);
    } else {
      fft_.fwd(line_out_, line_in_);
    }
    for (int i = 0; i < n_; ++i) data[i * n_ + col] = line_out_[i];
  }
}

void Spectral::forward(const std::vector<double>& in, std::vector<cplx>& out) {
  out.assign(in.begin(), in.end());
  transform(out, false);
}

void Spectral::forward(const std::vector<cplx>& in, std::vector<cplx>& out) {
  out = in;
  transform(out, false);
}

void Spectral::inverse(const std::vector<cplx>& in, std::vector<double>& out) {
  std::vector<cplx> tmp = in;
  transform(tmp, true);
  out.resize(size_);
  for (int i = 0; i < size_; ++i) out[i] = tmp[i].real();
}

bool Spectral::null_mode(int flat) const {
  for (int a = 0; a < dim_; ++a) {
    if (freq(index(flat, a)) != 0) return false;
  }
  return true;
}

void Spectral::derivative(const std::vector<cplx>& in, int axis, std::vector<cplx>& out) const {
  out.resize(size_);
  for (int i = 0; i < size_; ++i) {
    out[i] = in[i] * cplx(0.0, kTwoPi * freq(index(i, axis)));
  }
}

void Spectral::inverse_laplacian(std::vector<cplx>& inout, double c) const {
  for (int i = 0; i < size_; ++i) {
    if (null_mode(i)) {
      inout[i] = 0.0;
      continue;
    }
    double k2 = 0.0;
    for (int a = 0; a < dim_; ++a) {
      const double k = freq(index(i, a));
      k2 += k * k;
    }
    inout[i] /= -c * kTwoPi * kTwoPi * k2;
  }
}

}  // namespace homoglab::detail
