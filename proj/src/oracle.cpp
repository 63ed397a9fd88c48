#include "convec/oracle.hpp"

namespace convec {

TensorData reference_convolve(const Workload& w, i64* mult_count) {
  const ConvSpec& sp = w.spec;
  TensorData out;
  out.precision = sp.precision;
  for (Dim d : ConvSpec::tensor_dims(TensorId::Output)) out.dims.push_back(sp.extent(TensorId::Output, d));
  out.values.assign(out.volume(), 0);

  i64 mults = 0;
  const int f = sp.stride;
  for (i64 n = 0; n < sp.batch; ++n)
    for (i64 k = 0; k < sp.out_ch; ++k)
      for (i64 y = 0; y < sp.out_h; ++y)
        for (i64 x = 0; x < sp.out_w; ++x) {
          i64 acc = 0;
          for (i64 c = 0; c < sp.in_ch; ++c) {
            // Depth-wise filters read the input channel matching the output.
            const i64 ic = sp.variant == Variant::DS ? k : c;
            for (i64 t = 0; t < sp.flt_d; ++t)
              for (i64 s = 0; s < sp.flt_h; ++s)
                for (i64 r = 0; r < sp.flt_w; ++r) {
                  const i64 wv = w.weights.at({k, c, t, s, r});
                  const i64 iv = w.input.at({n, ic, t, y * f + s, x * f + r});
                  acc += wv * iv;
                  ++mults;
                }
          }
          out.at({n, k, y, x}) = truncate_to(sp.precision, acc);
        }

  if (mult_count) *mult_count = mults;
  return out;
}

}  // namespace convec
