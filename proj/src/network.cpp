#include "scalesteer/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "scalesteer/rng.hpp"
#include "scalesteer/steering.hpp"
#include "scalesteer/threading.hpp"

namespace scalesteer {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_list(s)) out.push_back(std::stoi(t));
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_list(s)) out.push_back(std::stod(t));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

std::vector<double> default_scale_grid() {
  std::vector<double> s(5);
  for (int i = 0; i < 5; ++i) s[i] = std::pow(2.4, i / 4.0);
  s[0] = 1.0;
  s[4] = 2.4;
  return s;
}

void NetworkConfig::validate() const {
  basis.validate();
  if (channel_widths.empty()) throw std::invalid_argument("config: channel_widths empty");
  for (int c : channel_widths)
    if (c < 1) throw std::invalid_argument("config: channel_widths must be positive");
  if (spatial_pool_sizes.size() != channel_widths.size())
    throw std::invalid_argument("config: need one spatial pool size per conv layer");
  for (int p : spatial_pool_sizes)
    if (p < 1) throw std::invalid_argument("config: pool sizes must be positive");
  if (scales.empty()) throw std::invalid_argument("config: scales empty");
  for (size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw std::invalid_argument("config: scales must be positive");
    if (i && scales[i] < scales[i - 1])
      throw std::invalid_argument("config: scales must ascend");
  }
  if (kernel_mode == KernelMode::plain && scales.size() != 1)
    throw std::invalid_argument("config: plain kernels take exactly one scale");
  if (base_kernel_size < 1 || base_kernel_size % 2 == 0)
    throw std::invalid_argument("config: base_kernel_size must be odd");
  if (upsample_factor < 1) throw std::invalid_argument("config: upsample_factor must be >= 1");
  if (dense_widths.empty()) throw std::invalid_argument("config: dense_widths empty");
  for (int d : dense_widths)
    if (d < 1) throw std::invalid_argument("config: dense_widths must be positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (!std::isfinite(learning_rate)) throw std::invalid_argument("config: bad learning_rate");
  if (!std::isfinite(clip_norm) || clip_norm < 0.0)
    throw std::invalid_argument("config: clip_norm must be >= 0");
}

std::string NetworkConfig::serialize() const {
  std::ostringstream os;
  os << "channel_widths = " << join(channel_widths) << "\n"
     << "scales = " << join(scales) << "\n"
     << "base_kernel_size = " << base_kernel_size << "\n"
     << "spatial_pool_sizes = " << join(spatial_pool_sizes) << "\n"
     << "upsample_factor = " << upsample_factor << "\n"
     << "dense_widths = " << join(dense_widths) << "\n"
     << "learning_rate = " << fmt(learning_rate) << "\n"
     << "epochs = " << epochs << "\n"
     << "batch_size = " << batch_size << "\n"
     << "seed = " << seed << "\n"
     << "kernel_mode = " << (kernel_mode == KernelMode::steered ? "steered" : "plain") << "\n"
     << "scale_response_norm = " << (scale_response_norm ? "true" : "false") << "\n"
     << "momentum = " << fmt(momentum) << "\n"
     << "clip_norm = " << fmt(clip_norm) << "\n"
     << "freeze_conv = " << (freeze_conv ? "true" : "false") << "\n"
     << "basis_orders = " << join(basis.orders) << "\n"
     << "basis_orientations = " << join(basis.orientations) << "\n"
     << "basis_sigma_phi = " << fmt(basis.sigma_phi) << "\n"
     << "basis_beta = " << fmt(basis.beta) << "\n"
     << "basis_m = " << fmt(basis.m) << "\n";
  return os.str();
}

NetworkConfig NetworkConfig::parse(const std::string& text) {
  NetworkConfig cfg;
  cfg.scales = default_scale_grid();
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "channel_widths") cfg.channel_widths = parse_ints(val);
    else if (key == "scales") cfg.scales = parse_doubles(val);
    else if (key == "base_kernel_size") cfg.base_kernel_size = std::stoi(val);
    else if (key == "spatial_pool_sizes") cfg.spatial_pool_sizes = parse_ints(val);
    else if (key == "upsample_factor") cfg.upsample_factor = std::stoi(val);
    else if (key == "dense_widths") cfg.dense_widths = parse_ints(val);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
    else if (key == "epochs") cfg.epochs = std::stoi(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "kernel_mode") {
      if (val == "steered") cfg.kernel_mode = KernelMode::steered;
      else if (val == "plain") cfg.kernel_mode = KernelMode::plain;
      else throw std::invalid_argument("config: kernel_mode must be steered or plain");
    } else if (key == "scale_response_norm")
      cfg.scale_response_norm = (val == "true" || val == "1");
    else if (key == "momentum") cfg.momentum = std::stod(val);
    else if (key == "clip_norm") cfg.clip_norm = std::stod(val);
    else if (key == "freeze_conv") cfg.freeze_conv = (val == "true" || val == "1");
    else if (key == "basis_orders") cfg.basis.orders = parse_doubles(val);
    else if (key == "basis_orientations") cfg.basis.orientations = parse_doubles(val);
    else if (key == "basis_sigma_phi") cfg.basis.sigma_phi = std::stod(val);
    else if (key == "basis_beta") cfg.basis.beta = std::stod(val);
    else if (key == "basis_m") cfg.basis.m = std::stod(val);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return cfg;
}

NetworkConfig NetworkConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

namespace {

// Shapes and parameter offsets without any parameter values.
NetworkState shaped(const NetworkConfig& config, int input_h, int input_w) {
  config.validate();
  NetworkState st;
  st.config = config;
  st.input_h = input_h;
  st.input_w = input_w;

  const int f = config.upsample_factor;
  int h = f > 1 ? input_h * f : input_h;
  int w = f > 1 ? input_w * f : input_w;
  const size_t kparams = config.kernel_mode == KernelMode::steered
                             ? 2 * size_t(config.basis.filter_count())
                             : size_t(config.base_kernel_size) * config.base_kernel_size;

  size_t off = 0;
  int c_in = 1;
  for (int l = 0; l < config.conv_layer_count(); ++l) {
    NetworkState::LayerDims d;
    d.c_in = c_in;
    d.c_out = config.channel_widths[l];
    d.h_in = h;
    d.w_in = w;
    const int pool = config.spatial_pool_sizes[l];
    d.h_out = ceil_div(h, pool);
    d.w_out = ceil_div(w, pool);
    d.kernel_params = kparams;
    d.coeff_offset = off;
    off += kparams * d.c_in * d.c_out;
    d.bias_offset = off;
    off += d.c_out;
    st.conv_dims.push_back(d);
    c_in = d.c_out;
    h = d.h_out;
    w = d.w_out;
  }
  st.flatten_size = c_in * h * w;

  int in = st.flatten_size;
  for (int width : config.dense_widths) {
    NetworkState::DenseDims d;
    d.in = in;
    d.out = width;
    d.weight_offset = off;
    off += size_t(width) * in;
    d.bias_offset = off;
    off += width;
    st.dense_dims.push_back(d);
    in = width;
  }
  st.params.assign(off, 0.0);
  st.revision = 1;
  return st;
}

}  // namespace

NetworkState NetworkState::init(const NetworkConfig& config, int input_h, int input_w,
                                const std::vector<RealGrid>* calibration) {
  NetworkState st = shaped(config, input_h, input_w);
  Rng rng(config.seed);

  // Coefficient variance is set so the assembled kernel carries Kaiming-scale
  // energy. A naive 1/sqrt(fan_in * stacks) would ignore that the stacks are
  // nearly zero outside thin angular rays, leaving activations orders of
  // magnitude too small to train.
  double unit_energy;  // response variance per input channel at unit coeff variance
  if (config.kernel_mode == KernelMode::steered) {
    const KernelBank bank = KernelBank::build(config);
    double total = 0.0;
    for (const KernelBank::PerScale& ps : bank.scales) {
      for (const RealGrid& g : ps.a)
        for (size_t i = 0; i < g.count(); ++i) total += g[i] * g[i];
      for (const RealGrid& g : ps.b)
        for (size_t i = 0; i < g.count(); ++i) total += g[i] * g[i];
    }
    unit_energy = total / double(bank.scales.size());
  } else {
    unit_energy = double(config.base_kernel_size) * config.base_kernel_size;
  }
  for (const LayerDims& d : st.conv_dims) {
    const double stddev = std::sqrt(2.0 / (d.c_in * unit_energy));
    for (size_t i = 0; i < d.kernel_params * d.c_in * d.c_out; ++i)
      st.params[d.coeff_offset + i] = rng.normal(0.0, stddev);
    // biases stay zero
  }
  for (size_t l = 0; l < st.dense_dims.size(); ++l) {
    const DenseDims& d = st.dense_dims[l];
    // Hidden layers feed a ReLU; the last one feeds the softmax and starts
    // near zero so the scores open close to uniform instead of saturated.
    const double stddev = l + 1 < st.dense_dims.size()
                              ? std::sqrt(2.0 / double(d.in))
                              : 0.01 / std::sqrt(double(d.in));
    for (size_t i = 0; i < size_t(d.in) * d.out; ++i)
      st.params[d.weight_offset + i] = rng.normal(0.0, stddev);
  }

  if (calibration != nullptr && !calibration->empty()) {
    // Standardize layer by layer on a sample of the data: scale each output
    // channel's weights to unit response std and set its bias to cancel the
    // batch mean. The bias lands after the pools and a positive weight scale
    // flips no max/ReLU decision, so the pass is exact. Without it the raw
    // responses ride on a large shared offset that drowns the per-sample
    // signal and leaves SGD stuck at the uniform-score plateau.
    const KernelBank bank = KernelBank::build(config);
    const size_t batch = std::min<size_t>(32, calibration->size());
    std::vector<ForwardCache> caches(batch);
    const auto refresh = [&] {
      for (size_t i = 0; i < batch; ++i) caches[i] = forward(st, bank, (*calibration)[i]);
    };
    for (size_t l = 0; l < st.conv_dims.size(); ++l) {
      refresh();
      const LayerDims& d = st.conv_dims[l];
      for (int c = 0; c < d.c_out; ++c) {
        double sum = 0.0, sum2 = 0.0;
        size_t n = 0;
        for (const ForwardCache& cache : caches) {
          const RealGrid& z = cache.layers[l].z[c];
          for (size_t p = 0; p < z.count(); ++p) {
            sum += z[p];
            sum2 += z[p] * z[p];
          }
          n += z.count();
        }
        const double mean = sum / double(n);
        const double stddev = std::sqrt(std::max(0.0, sum2 / double(n) - mean * mean));
        const double gamma = stddev > 0.0 ? 1.0 / stddev : 1.0;
        const size_t lo = st.coeff_index(int(l), c, 0);
        for (size_t p = lo; p < lo + size_t(d.c_in) * d.kernel_params; ++p)
          st.params[p] *= gamma;
        st.params[d.bias_offset + size_t(c)] = -mean * gamma;
      }
      ++st.revision;
    }
    for (size_t l = 0; l + 1 < st.dense_dims.size(); ++l) {
      refresh();
      const DenseDims& d = st.dense_dims[l];
      for (int u = 0; u < d.out; ++u) {
        double sum = 0.0, sum2 = 0.0;
        for (const ForwardCache& cache : caches) {
          const double z = cache.dense_z[l][u];
          sum += z;
          sum2 += z * z;
        }
        const double mean = sum / double(batch);
        const double stddev = std::sqrt(std::max(0.0, sum2 / double(batch) - mean * mean));
        const double gamma = stddev > 0.0 ? 1.0 / stddev : 1.0;
        const size_t row = d.weight_offset + size_t(u) * d.in;
        for (size_t p = row; p < row + size_t(d.in); ++p) st.params[p] *= gamma;
        st.params[d.bias_offset + size_t(u)] = -mean * gamma;
      }
      ++st.revision;
    }
  }
  return st;
}

size_t NetworkState::coeff_index(int layer, int out_ch, int in_ch) const {
  const LayerDims& d = conv_dims[layer];
  return d.coeff_offset + (size_t(out_ch) * d.c_in + in_ch) * d.kernel_params;
}

CoefficientSet NetworkState::coeffs_at(int layer, int out_ch, int in_ch) const {
  CoefficientSet cs = CoefficientSet::zeros(config.basis);
  const size_t base = coeff_index(layer, out_ch, in_ch);
  for (size_t f = 0; f < cs.c.size(); ++f)
    cs.c[f] = {params[base + 2 * f], params[base + 2 * f + 1]};
  return cs;
}

KernelBank KernelBank::build(const NetworkConfig& config) {
  config.validate();
  KernelBank bank;
  if (config.kernel_mode == KernelMode::plain) {
    PerScale ps;
    ps.scale = config.scales[0];
    ps.size = config.base_kernel_size;
    bank.scales.push_back(std::move(ps));
    return bank;
  }
  const BasisSpec& spec = config.basis;
  for (double s : config.scales) {
    PerScale ps;
    ps.scale = s;
    ps.size = steered_odd_size(config.base_kernel_size, s);
    const SampledBasis basis = build_basis(spec, ps.size);
    ps.a.reserve(basis.filters.size());
    ps.b.reserve(basis.filters.size());
    for (int oi = 0; oi < spec.order_count(); ++oi) {
      const std::complex<double> phase =
          config.scale_response_norm
              ? std::polar(1.0, -spec.orders[oi] * std::log(s))
              : order_phase(spec.orders[oi], spec.m, s);
      for (int ji = 0; ji < spec.orientation_count(); ++ji) {
        const ComplexGrid& f = basis.at(oi, ji);
        RealGrid a(ps.size, ps.size), b(ps.size, ps.size);
        for (size_t i = 0; i < f.count(); ++i) {
          const std::complex<double> v = phase * f[i];
          a[i] = v.real();
          b[i] = -v.imag();
        }
        ps.a.push_back(std::move(a));
        ps.b.push_back(std::move(b));
      }
    }
    bank.scales.push_back(std::move(ps));
  }
  return bank;
}

RealGrid KernelBank::assemble(const NetworkState& state, int layer, int out_ch, int in_ch,
                              int scale_index) const {
  const PerScale& ps = scales[scale_index];
  const size_t base = state.coeff_index(layer, out_ch, in_ch);
  if (state.config.kernel_mode == KernelMode::plain) {
    RealGrid k(ps.size, ps.size);
    for (size_t i = 0; i < k.count(); ++i) k[i] = state.params[base + i];
    return k;
  }
  RealGrid k(ps.size, ps.size);
  for (size_t f = 0; f < ps.a.size(); ++f) {
    const double re = state.params[base + 2 * f];
    const double im = state.params[base + 2 * f + 1];
    if (re == 0.0 && im == 0.0) continue;
    const RealGrid& a = ps.a[f];
    const RealGrid& b = ps.b[f];
    for (size_t i = 0; i < k.count(); ++i) k[i] += re * a[i] + im * b[i];
  }
  return k;
}

ForwardCache forward(const NetworkState& state, const KernelBank& bank, const RealGrid& image) {
  if (image.rows() != state.input_h || image.cols() != state.input_w)
    throw std::invalid_argument("forward: image size does not match network input");
  const NetworkConfig& cfg = state.config;
  ForwardCache cache;
  cache.revision = state.revision;

  std::vector<RealGrid> x{upsample(image, cfg.upsample_factor)};
  for (int l = 0; l < cfg.conv_layer_count(); ++l) {
    const NetworkState::LayerDims& d = state.conv_dims[l];
    ForwardCache::Layer layer;
    layer.x = x;
    std::vector<RealGrid> next(d.c_out);
    layer.argmax_scale.resize(d.c_out);
    layer.z.resize(d.c_out);
    layer.pool_pick.resize(d.c_out);
    const int pool = cfg.spatial_pool_sizes[l];

    for (int o = 0; o < d.c_out; ++o) {
      RealGrid pooled;
      IntGrid amax(d.h_in, d.w_in);
      for (size_t si = 0; si < bank.scales.size(); ++si) {
        RealGrid acc(d.h_in, d.w_in);
        for (int c = 0; c < d.c_in; ++c) {
          const RealGrid k = bank.assemble(state, l, o, c, int(si));
          const RealGrid m = xcorr2(layer.x[c], k, Padding::same);
          for (size_t i = 0; i < acc.count(); ++i) acc[i] += m[i];
        }
        if (si == 0) {
          pooled = std::move(acc);
        } else {
          for (size_t i = 0; i < pooled.count(); ++i)
            if (acc[i] > pooled[i]) {
              pooled[i] = acc[i];
              amax[i] = int(si);
            }
        }
      }
      const double bias = state.params[d.bias_offset + o];
      for (size_t i = 0; i < pooled.count(); ++i) pooled[i] += bias;
      layer.z[o] = pooled;  // pre-activation
      layer.argmax_scale[o] = std::move(amax);

      RealGrid out(d.h_out, d.w_out);
      IntGrid pick(d.h_out, d.w_out);
      for (int pr = 0; pr < d.h_out; ++pr)
        for (int pc = 0; pc < d.w_out; ++pc) {
          const int r0 = pr * pool, c0 = pc * pool;
          const int r1 = std::min(r0 + pool, d.h_in), c1 = std::min(c0 + pool, d.w_in);
          double best = -1.0;
          int best_idx = r0 * d.w_in + c0;
          for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) {
              const double v = std::max(0.0, pooled(r, c));
              if (v > best) {
                best = v;
                best_idx = r * d.w_in + c;
              }
            }
          out(pr, pc) = best;
          pick(pr, pc) = best_idx;
        }
      next[o] = std::move(out);
      layer.pool_pick[o] = std::move(pick);
    }
    cache.layers.push_back(std::move(layer));
    x = std::move(next);
  }

  cache.flat.reserve(state.flatten_size);
  for (const RealGrid& g : x)
    for (size_t i = 0; i < g.count(); ++i) cache.flat.push_back(g[i]);

  std::vector<double> act = cache.flat;
  for (size_t di = 0; di < state.dense_dims.size(); ++di) {
    const NetworkState::DenseDims& d = state.dense_dims[di];
    std::vector<double> z(d.out);
    for (int o = 0; o < d.out; ++o) {
      double acc = state.params[d.bias_offset + o];
      const size_t row = d.weight_offset + size_t(o) * d.in;
      for (int i = 0; i < d.in; ++i) acc += state.params[row + i] * act[i];
      z[o] = acc;
    }
    cache.dense_z.push_back(z);
    if (di + 1 < state.dense_dims.size())
      for (double& v : z) v = std::max(0.0, v);
    act = std::move(z);
  }
  cache.scores = act;
  return cache;
}

double softmax_xent(const std::vector<double>& scores, int label, std::vector<double>* loss_grad) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - m);
  const double lse = m + std::log(sum);
  if (loss_grad) {
    loss_grad->resize(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) (*loss_grad)[i] = std::exp(scores[i] - lse);
    (*loss_grad)[label] -= 1.0;
  }
  return lse - scores[label];
}

std::vector<double> backward(const NetworkState& state, const KernelBank& bank,
                             const ForwardCache& cache, const std::vector<double>& score_grad) {
  if (cache.revision != state.revision)
    throw std::logic_error("backward: cache is stale (parameters changed since forward)");
  const NetworkConfig& cfg = state.config;
  std::vector<double> g(state.param_count(), 0.0);

  // dense stack
  std::vector<double> delta = score_grad;
  for (int di = int(state.dense_dims.size()) - 1; di >= 0; --di) {
    const NetworkState::DenseDims& d = state.dense_dims[di];
    std::vector<double> in_act;
    if (di == 0) {
      in_act = cache.flat;
    } else {
      in_act = cache.dense_z[di - 1];
      for (double& v : in_act) v = std::max(0.0, v);
    }
    std::vector<double> din(d.in, 0.0);
    for (int o = 0; o < d.out; ++o) {
      const size_t row = d.weight_offset + size_t(o) * d.in;
      g[d.bias_offset + o] += delta[o];
      for (int i = 0; i < d.in; ++i) {
        g[row + i] += delta[o] * in_act[i];
        din[i] += state.params[row + i] * delta[o];
      }
    }
    if (di > 0) {
      const std::vector<double>& z = cache.dense_z[di - 1];
      for (int i = 0; i < d.in; ++i) din[i] = z[i] > 0.0 ? din[i] : 0.0;
    }
    delta = std::move(din);
  }

  // reshape the flatten gradient into per-channel maps of the last layer
  const int L = cfg.conv_layer_count();
  std::vector<RealGrid> dy(state.conv_dims[L - 1].c_out);
  {
    const NetworkState::LayerDims& d = state.conv_dims[L - 1];
    size_t idx = 0;
    for (int o = 0; o < d.c_out; ++o) {
      RealGrid m(d.h_out, d.w_out);
      for (size_t i = 0; i < m.count(); ++i) m[i] = delta[idx++];
      dy[o] = std::move(m);
    }
  }

  for (int l = L - 1; l >= 0; --l) {
    const NetworkState::LayerDims& d = state.conv_dims[l];
    const ForwardCache::Layer& layer = cache.layers[l];
    std::vector<RealGrid> dx;
    if (l > 0) dx.assign(d.c_in, RealGrid(d.h_in, d.w_in));

    for (int o = 0; o < d.c_out; ++o) {
      // spatial unpool + ReLU mask
      RealGrid dz(d.h_in, d.w_in);
      const IntGrid& pick = layer.pool_pick[o];
      const RealGrid& dyo = dy[o];
      for (size_t i = 0; i < dyo.count(); ++i) dz[pick[i]] += dyo[i];
      const RealGrid& z = layer.z[o];
      double dbias = 0.0;
      for (size_t i = 0; i < dz.count(); ++i) {
        dz[i] = z[i] > 0.0 ? dz[i] : 0.0;
        dbias += dz[i];
      }
      g[d.bias_offset + o] += dbias;

      // split by winning scale
      const IntGrid& amax = layer.argmax_scale[o];
      std::vector<std::vector<std::pair<int, double>>> support(bank.scales.size());
      for (size_t i = 0; i < dz.count(); ++i)
        if (dz[i] != 0.0) support[amax[i]].emplace_back(int(i), dz[i]);

      for (size_t si = 0; si < bank.scales.size(); ++si) {
        if (support[si].empty()) continue;
        const KernelBank::PerScale& ps = bank.scales[si];
        const int kn = ps.size, pr = (kn - 1) / 2;
        for (int c = 0; c < d.c_in; ++c) {
          const RealGrid& xc = layer.x[c];
          RealGrid dw(kn, kn);
          for (const auto& [p, v] : support[si]) {
            const int prow = p / d.w_in, pcol = p % d.w_in;
            const int i0 = std::max(0, pr - prow), i1 = std::min(kn, d.h_in + pr - prow);
            const int j0 = std::max(0, pr - pcol), j1 = std::min(kn, d.w_in + pr - pcol);
            for (int i = i0; i < i1; ++i)
              for (int j = j0; j < j1; ++j)
                dw(i, j) += v * xc(prow + i - pr, pcol + j - pr);
          }
          const size_t base = state.coeff_index(l, o, c);
          if (cfg.kernel_mode == KernelMode::plain) {
            for (size_t i = 0; i < dw.count(); ++i) g[base + i] += dw[i];
          } else {
            for (size_t f = 0; f < ps.a.size(); ++f) {
              double ga = 0.0, gb = 0.0;
              const RealGrid& a = ps.a[f];
              const RealGrid& b = ps.b[f];
              for (size_t i = 0; i < dw.count(); ++i) {
                ga += dw[i] * a[i];
                gb += dw[i] * b[i];
              }
              g[base + 2 * f] += ga;
              g[base + 2 * f + 1] += gb;
            }
          }
          if (l > 0) {
            const RealGrid k = bank.assemble(state, l, o, c, int(si));
            RealGrid& dxc = dx[c];
            for (const auto& [p, v] : support[si]) {
              const int prow = p / d.w_in, pcol = p % d.w_in;
              const int i0 = std::max(0, pr - prow), i1 = std::min(kn, d.h_in + pr - prow);
              const int j0 = std::max(0, pr - pcol), j1 = std::min(kn, d.w_in + pr - pcol);
              for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j)
                  dxc(prow + i - pr, pcol + j - pr) += v * k(i, j);
            }
          }
        }
      }
    }
    if (l > 0) dy = std::move(dx);
  }
  return g;
}

double loss_at(const NetworkState& state, const KernelBank& bank, const RealGrid& image,
               int label) {
  const ForwardCache cache = forward(state, bank, image);
  return softmax_xent(cache.scores, label, nullptr);
}

uint64_t route_signature(const ForwardCache& cache) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const ForwardCache::Layer& l : cache.layers) {
    for (const IntGrid& g : l.argmax_scale)
      for (size_t i = 0; i < g.count(); ++i) mix(uint64_t(g[i]));
    for (const IntGrid& g : l.pool_pick)
      for (size_t i = 0; i < g.count(); ++i) mix(uint64_t(g[i]));
    for (const RealGrid& z : l.z)
      for (size_t i = 0; i < z.count(); ++i) mix(z[i] > 0.0 ? 1 : 0);
  }
  for (size_t di = 0; di + 1 < cache.dense_z.size(); ++di)
    for (double z : cache.dense_z[di]) mix(z > 0.0 ? 1 : 0);
  return h;
}

std::vector<EpochMetrics> train(NetworkState& state, const LabeledImageSet& train_set,
                                const LabeledImageSet* val_set) {
  const NetworkConfig& cfg = state.config;
  if (train_set.count() == 0) throw std::invalid_argument("train: empty dataset");
  for (int lbl : train_set.labels)
    if (lbl < 0 || lbl >= cfg.class_count())
      throw std::invalid_argument("train: label out of range for the output layer");
  const KernelBank bank = KernelBank::build(cfg);

  std::vector<double> velocity;
  if (cfg.momentum != 0.0) velocity.assign(state.param_count(), 0.0);

  std::vector<EpochMetrics> metrics;
  long step = 0;
  std::vector<size_t> order(train_set.count());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::for_index(cfg.seed, 0x5u + uint64_t(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t correct = 0, seen = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += size_t(cfg.batch_size)) {
      const size_t bn = std::min(order.size() - b0, size_t(cfg.batch_size));
      std::vector<std::vector<double>> slot_grads(bn);
      std::vector<double> slot_loss(bn);
      std::vector<uint8_t> slot_correct(bn), slot_bad(bn, 0);

      parallel_for(bn, [&](size_t i) {
        const size_t idx = order[b0 + i];
        const ForwardCache cache = forward(state, bank, train_set.images[idx]);
        std::vector<double> sg;
        slot_loss[i] = softmax_xent(cache.scores, train_set.labels[idx], &sg);
        if (!std::isfinite(slot_loss[i])) {
          slot_bad[i] = 1;
          return;
        }
        const size_t pred = size_t(
            std::max_element(cache.scores.begin(), cache.scores.end()) - cache.scores.begin());
        slot_correct[i] = pred == size_t(train_set.labels[idx]) ? 1 : 0;
        slot_grads[i] = backward(state, bank, cache, sg);
      });

      for (size_t i = 0; i < bn; ++i)
        if (slot_bad[i])
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step));

      std::vector<double> g(state.param_count(), 0.0);
      for (size_t i = 0; i < bn; ++i) {
        const std::vector<double>& sg = slot_grads[i];
        for (size_t p = 0; p < g.size(); ++p) g[p] += sg[p];
        loss_sum += slot_loss[i];
        correct += slot_correct[i];
      }
      if (cfg.freeze_conv) {
        const size_t head = state.dense_dims.front().weight_offset;
        std::fill(g.begin(), g.begin() + head, 0.0);
      }
      double inv = 1.0 / double(bn);
      if (cfg.clip_norm > 0.0) {
        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        const double norm = std::sqrt(norm2) * inv;
        if (norm > cfg.clip_norm) inv *= cfg.clip_norm / norm;
      }
      if (cfg.momentum != 0.0) {
        for (size_t p = 0; p < g.size(); ++p) {
          velocity[p] = cfg.momentum * velocity[p] + g[p] * inv;
          state.params[p] -= cfg.learning_rate * velocity[p];
        }
      } else {
        for (size_t p = 0; p < g.size(); ++p)
          state.params[p] -= cfg.learning_rate * g[p] * inv;
      }
      ++state.revision;
      seen += bn;
      ++step;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.step = step;
    em.loss = loss_sum / double(seen);
    em.train_acc = double(correct) / double(seen);
    em.val_acc = val_set ? 1.0 - evaluate(state, *val_set)
                         : std::numeric_limits<double>::quiet_NaN();
    metrics.push_back(em);
  }
  return metrics;
}

double evaluate(const NetworkState& state, const LabeledImageSet& set) {
  if (set.count() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const KernelBank bank = KernelBank::build(state.config);
  std::vector<uint8_t> wrong(set.count());
  parallel_for(set.count(), [&](size_t i) {
    const ForwardCache cache = forward(state, bank, set.images[i]);
    const size_t pred = size_t(
        std::max_element(cache.scores.begin(), cache.scores.end()) - cache.scores.begin());
    wrong[i] = pred == size_t(set.labels[i]) ? 0 : 1;
  });
  size_t bad = 0;
  for (uint8_t w : wrong) bad += w;
  return double(bad) / double(set.count());
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f << "epoch,step,loss,train_acc,val_acc\n";
  for (const EpochMetrics& m : metrics)
    f << m.epoch << "," << m.step << "," << fmt(m.loss) << "," << fmt(m.train_acc) << ","
      << fmt(m.val_acc) << "\n";
}

namespace {
constexpr char kCkptMagic[8] = {'S', 'S', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const NetworkState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f.write(kCkptMagic, 8);
  const uint32_t version = 1;
  const uint32_t h = uint32_t(state.input_h), w = uint32_t(state.input_w);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  const std::string cfg = state.config.serialize();
  const uint64_t clen = cfg.size();
  f.write(reinterpret_cast<const char*>(&clen), 8);
  f.write(cfg.data(), std::streamsize(cfg.size()));
  const uint64_t n = state.params.size();
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(state.params.data()), std::streamsize(n * 8));
  if (!f) throw std::runtime_error(path + ": write failed");
}

NetworkState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  uint32_t version = 0, h = 0, w = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || version != 1)
    throw std::runtime_error(path + ": unsupported checkpoint version");
  uint64_t clen = 0;
  f.read(reinterpret_cast<char*>(&clen), 8);
  std::string cfg(clen, '\0');
  f.read(cfg.data(), std::streamsize(clen));
  uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  if (!f) throw std::runtime_error(path + ": truncated header");
  NetworkState st = shaped(NetworkConfig::parse(cfg), int(h), int(w));
  if (n != st.params.size())
    throw std::runtime_error(path + ": parameter count does not match config");
  f.read(reinterpret_cast<char*>(st.params.data()), std::streamsize(n * 8));
  if (!f) throw std::runtime_error(path + ": truncated parameters");
  return st;
}

}  // namespace scalesteer
