#include "servtime/mempool/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "servtime/nn/special.hpp"

#include "servtime/nn/checkpoint.hpp"
#include "servtime/nsx/families.hpp"

namespace servtime::mempool {

Scalar MempoolSeries::inter_block(int i) const {
  const Scalar prev = i > 0 ? records[i - 1].block_time : 0.0;
  return records[i].block_time - prev;
}

Scalar MempoolSeries::forward_gap(int i) const {
  if (i + 1 >= size())
    throw std::out_of_range("MempoolSeries::forward_gap: last record");
  return records[i + 1].block_time - records[i].block_time;
}

void MempoolSeries::validate() const {
  if (records.empty())
    throw std::invalid_argument("MempoolSeries: empty series");
  Scalar prev = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const MempoolRecord& r = records[i];
    if (!(r.block_time > prev))
      throw std::invalid_argument(
          "MempoolSeries: block times must be strictly increasing from 0");
    if (r.unconfirmed < 0.0 || r.accepted < 0.0)
      throw std::invalid_argument("MempoolSeries: negative count");
    if (r.accepted > r.unconfirmed + 1e-9)
      throw std::invalid_argument(
          "MempoolSeries: accepted exceeds unconfirmed at record " +
          std::to_string(i));
    prev = r.block_time;
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

MempoolSeries ingest_mempool_csv(const std::string& path, Scalar horizon) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ingest_mempool_csv: cannot open " + path);
  MempoolSeries s;
  std::string line;
  long line_no = 0;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!saw_header) {
      saw_header = true;  // header row required by the schema
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 3)
      throw std::runtime_error("ingest_mempool_csv: line " +
                               std::to_string(line_no) +
                               ": expected 3 fields");
    MempoolRecord r;
    try {
      r.block_time = std::stod(fields[0]);
      r.unconfirmed = std::stod(fields[1]);
      r.accepted = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw std::runtime_error("ingest_mempool_csv: line " +
                               std::to_string(line_no) +
                               ": unparseable field");
    }
    s.records.push_back(r);
  }
  s.horizon = horizon > 0.0
                  ? horizon
                  : (s.records.empty() ? 0.0 : s.records.back().block_time);
  s.validate();
  return s;
}

void write_mempool_csv(const MempoolSeries& series, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_mempool_csv: cannot open " + path);
  os << "block_time,unconfirmed_count,accepted_count\n";
  os.precision(17);
  for (const auto& r : series.records)
    os << r.block_time << ',' << r.unconfirmed << ',' << r.accepted << '\n';
}

MempoolSeries simulate_sawtooth(Scalar rate, Scalar block_rate, Scalar horizon,
                                std::uint64_t seed, Scalar u0) {
  if (rate <= 0.0 || block_rate <= 0.0 || horizon <= 0.0)
    throw std::invalid_argument("simulate_sawtooth: rates and horizon > 0");
  Rng rng(seed);
  MempoolSeries s;
  s.horizon = horizon;
  Scalar t = 0.0, u = u0;
  while (true) {
    const Scalar gap = rng.exponential(block_rate);
    if (t + gap > horizon) break;
    t += gap;
    u += rate * gap;
    MempoolRecord r;
    r.block_time = t;
    r.unconfirmed = u;
    r.accepted = 0.5 * u;
    s.records.push_back(r);
    u -= r.accepted;
  }
  if (s.records.empty())
    throw std::runtime_error("simulate_sawtooth: no blocks before horizon");
  return s;
}

MpVariant parse_mp_variant(const std::string& name) {
  if (name == "nms-g" || name == "nmsg" || name == "NMS-G")
    return MpVariant::NMS_G;
  if (name == "ams" || name == "AMS") return MpVariant::AMS;
  throw std::invalid_argument("unknown mempool variant: " + name);
}

std::string mp_variant_name(MpVariant v) {
  return v == MpVariant::NMS_G ? "nms-g" : "ams";
}

MempoolModel::MempoolModel(MpVariant variant, const MempoolConfig& cfg,
                           std::uint64_t seed)
    : variant_(variant), noise_dim_(cfg.noise_dim) {
  Rng rng(seed);
  u_lstm_ = nn::LstmCell("mp.ulstm", noise_dim_ + 2, cfg.u_hidden, rng);
  m_lstm_ = nn::LstmCell("mp.mlstm", 2, cfg.m_hidden, rng);
  const int h = cfg.head_hidden;
  if (variant_ == MpVariant::NMS_G) {
    u_head_ = nn::Mlp("mp.uhead", {cfg.u_hidden, h, h, h, 2}, rng);
    acc_head_ =
        nn::Mlp("mp.ahead", {cfg.m_hidden + cfg.u_hidden, h, h, h, 2}, rng);
  } else {
    u_head_ = nn::Mlp("mp.uhead", {cfg.u_hidden + noise_dim_, h, h, h, 1}, rng);
    acc_head_ = nn::Mlp(
        "mp.ahead", {cfg.m_hidden + cfg.u_hidden + noise_dim_, h, h, h, 1},
        rng);
  }
  head_vm_ = nn::ParamTensor::vector("mp.head.vm", cfg.m_hidden);
  nn::init_uniform(head_vm_, cfg.m_hidden, 1, rng);
  head_vu_ = nn::ParamTensor::vector("mp.head.vu", cfg.u_hidden);
  nn::init_uniform(head_vu_, cfg.u_hidden, 1, rng);
  head_w_ = nn::ParamTensor::scalar("mp.head.w");
  head_b_ = nn::ParamTensor::scalar("mp.head.b");
}

MempoolModel::LstmState MempoolModel::initial_u_state() const {
  return {Vec::Zero(u_lstm_.hidden_dim()), Vec::Zero(u_lstm_.hidden_dim())};
}

MempoolModel::LstmState MempoolModel::initial_m_state() const {
  return {Vec::Zero(m_lstm_.hidden_dim()), Vec::Zero(m_lstm_.hidden_dim())};
}

Vec MempoolModel::u_features(Scalar forward_gap, Scalar u,
                             const Vec& eps) const {
  Vec f = Vec::Zero(noise_dim_ + 2);
  if (eps.size() > 0) f.head(noise_dim_) = eps;
  f[noise_dim_] = std::log1p(forward_gap / tau_scale_);
  f[noise_dim_ + 1] = std::log1p(u / u_scale_);
  return f;
}

Vec MempoolModel::m_features(Scalar accepted, Scalar inter_block) const {
  Vec f(2);
  f[0] = std::log1p(accepted / b_scale_);
  f[1] = std::log1p(inter_block / tau_scale_);
  return f;
}

MempoolModel::LstmState MempoolModel::step_u(const LstmState& s,
                                             Scalar forward_gap, Scalar u,
                                             const Vec& eps) const {
  auto [h, c] = u_lstm_.step_value(u_features(forward_gap, u, eps), s.h, s.c);
  return {h, c};
}

MempoolModel::LstmState MempoolModel::step_blocks(const LstmState& s,
                                                  Scalar accepted,
                                                  Scalar inter_block) const {
  auto [h, c] = m_lstm_.step_value(m_features(accepted, inter_block), s.h, s.c);
  return {h, c};
}

Vec MempoolModel::u_gamma_params(const Vec& h_u) const {
  if (variant_ != MpVariant::NMS_G)
    throw std::logic_error("u_gamma_params: NMS-G only");
  const Vec p =
      nsx::link_params_value(nsx::Family::Gamma, u_head_.forward_value(h_u),
                             1.0);
  Vec out(2);
  out[0] = p[0];
  out[1] = p[1] / u_scale_;  // rate of the original-unit variable
  return out;
}

Scalar MempoolModel::sample_u(const Vec& h_u, Rng& rng) const {
  if (variant_ == MpVariant::NMS_G) {
    const Vec p = nsx::link_params_value(nsx::Family::Gamma,
                                         u_head_.forward_value(h_u), 1.0);
    return nsx::sample(nsx::Family::Gamma, p, rng) * u_scale_;
  }
  Vec in(u_lstm_.hidden_dim() + noise_dim_);
  in.head(u_lstm_.hidden_dim()) = h_u;
  in.tail(noise_dim_) = rng.normal_vec(noise_dim_);
  const std::vector<Vec> noise = u_head_.draw_noise(rng);
  const Scalar raw = u_head_.forward_value(in, &noise)[0];
  return nn::softplus(raw) * u_scale_;
}

Scalar MempoolModel::predict_u_mean(const Vec& h_u, int n_mc, Rng& rng) const {
  if (variant_ == MpVariant::NMS_G) {
    const Vec p = u_gamma_params(h_u);
    return p[0] / p[1];
  }
  Scalar acc = 0.0;
  for (int k = 0; k < n_mc; ++k) acc += sample_u(h_u, rng);
  return acc / n_mc;
}

Scalar MempoolModel::block_alpha(const Vec& h_m, const Vec& h_u) const {
  return head_vm_.values.dot(h_m) + head_vu_.values.dot(h_u) +
         head_b_.values[0];
}

rpp::ExpHead MempoolModel::block_head(const Vec& h_m, const Vec& h_u) const {
  return {block_alpha(h_m, h_u), head_w_.values[0]};
}

Scalar MempoolModel::block_intensity(const Vec& h_m, const Vec& h_u,
                                     Scalar dt) const {
  return rpp::intensity(block_head(h_m, h_u), dt);
}

Vec MempoolModel::accepted_gamma_params(const Vec& h_m,
                                        const Vec& h_u_prev) const {
  if (variant_ != MpVariant::NMS_G)
    throw std::logic_error("accepted_gamma_params: NMS-G only");
  Vec in(m_lstm_.hidden_dim() + u_lstm_.hidden_dim());
  in.head(m_lstm_.hidden_dim()) = h_m;
  in.tail(u_lstm_.hidden_dim()) = h_u_prev;
  const Vec p = nsx::link_params_value(nsx::Family::Gamma,
                                       acc_head_.forward_value(in), 1.0);
  Vec out(2);
  out[0] = p[0];
  out[1] = p[1] / b_scale_;
  return out;
}

Scalar MempoolModel::generate_accepted(const Vec& h_m, const Vec& h_u_prev,
                                       Rng& rng, Scalar u_cap) const {
  Scalar b;
  if (variant_ == MpVariant::NMS_G) {
    Vec in(m_lstm_.hidden_dim() + u_lstm_.hidden_dim());
    in.head(m_lstm_.hidden_dim()) = h_m;
    in.tail(u_lstm_.hidden_dim()) = h_u_prev;
    const Vec p = nsx::link_params_value(nsx::Family::Gamma,
                                         acc_head_.forward_value(in), 1.0);
    b = nsx::sample(nsx::Family::Gamma, p, rng) * b_scale_;
  } else {
    Vec in(m_lstm_.hidden_dim() + u_lstm_.hidden_dim() + noise_dim_);
    in.head(m_lstm_.hidden_dim()) = h_m;
    in.segment(m_lstm_.hidden_dim(), u_lstm_.hidden_dim()) = h_u_prev;
    in.tail(noise_dim_) = rng.normal_vec(noise_dim_);
    const std::vector<Vec> noise = acc_head_.draw_noise(rng);
    b = nn::softplus(acc_head_.forward_value(in, &noise)[0]) * b_scale_;
  }
  return std::min(b, u_cap);  // b <= u, enforced at generation only
}

std::vector<MempoolModel::LstmState> MempoolModel::u_states(
    const MempoolSeries& s, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<LstmState> out;
  LstmState st = initial_u_state();
  const int n = s.size();
  for (int i = 0; i < n; ++i) {
    const Vec eps = variant_ == MpVariant::AMS ? rng.normal_vec(noise_dim_)
                                               : Vec::Zero(noise_dim_);
    // The last record has no forward gap; stand in with the mean gap.
    const Scalar gap = i + 1 < n ? s.forward_gap(i) : tau_scale_;
    st = step_u(st, gap, s.records[i].unconfirmed, eps);
    out.push_back(st);
  }
  return out;
}

std::vector<MempoolModel::LstmState> MempoolModel::m_states(
    const MempoolSeries& s) const {
  std::vector<LstmState> out;
  LstmState st = initial_m_state();
  for (int i = 0; i < s.size(); ++i) {
    st = step_blocks(st, s.records[i].accepted, s.inter_block(i));
    out.push_back(st);
  }
  return out;
}

std::vector<Scalar> MempoolModel::predict_u_one_step(const MempoolSeries& s,
                                                     int n_mc,
                                                     std::uint64_t seed) const {
  const auto states = u_states(s, seed);
  Rng rng(seed + 1);
  std::vector<Scalar> out;
  for (int i = 0; i + 1 < s.size(); ++i)
    out.push_back(predict_u_mean(states[i].h, n_mc, rng));
  return out;
}

Scalar MempoolModel::block_mean_log_likelihood(const MempoolSeries& s,
                                               std::uint64_t seed) const {
  if (s.size() < 2) return 0.0;
  const auto hu = u_states(s, seed);
  const auto hm = m_states(s);
  Scalar total = 0.0;
  for (int i = 0; i + 1 < s.size(); ++i)
    total += rpp::log_f_star(block_head(hm[i].h, hu[i].h),
                             s.inter_block(i + 1) / tau_scale_);
  return total / (s.size() - 1);
}

void MempoolModel::set_scales(Scalar u_scale, Scalar b_scale,
                              Scalar tau_scale) {
  if (u_scale <= 0.0 || b_scale <= 0.0 || tau_scale <= 0.0)
    throw std::invalid_argument("MempoolModel::set_scales: scales > 0");
  u_scale_ = u_scale;
  b_scale_ = b_scale;
  tau_scale_ = tau_scale;
}

void MempoolModel::fit_scales(const MempoolSeries& s) {
  Scalar su = 0.0, sb = 0.0;
  for (const auto& r : s.records) {
    su += r.unconfirmed;
    sb += r.accepted;
  }
  const int n = s.size();
  const Scalar mean_tau = s.records.back().block_time / n;
  set_scales(std::max(su / n, 1e-12), std::max(sb / n, 1e-12),
             std::max(mean_tau, 1e-12));
}

std::vector<nn::ParamTensor*> MempoolModel::u_params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : u_lstm_.params()) out.push_back(&p);
  for (auto& p : u_head_.params()) out.push_back(&p);
  return out;
}

std::vector<nn::ParamTensor*> MempoolModel::block_params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : m_lstm_.params()) out.push_back(&p);
  out.push_back(&head_vm_);
  out.push_back(&head_vu_);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<nn::ParamTensor*> MempoolModel::accepted_params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : acc_head_.params()) out.push_back(&p);
  return out;
}

std::vector<nn::ParamTensor*> MempoolModel::params() {
  auto out = u_params();
  for (auto* p : block_params()) out.push_back(p);
  for (auto* p : accepted_params()) out.push_back(p);
  return out;
}

void MempoolModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  ck.metadata["kind"] = "mempool";
  ck.metadata["variant"] = mp_variant_name(variant_);
  ck.metadata["noise_dim"] = std::to_string(noise_dim_);
  ck.metadata["u_hidden"] = std::to_string(u_lstm_.hidden_dim());
  ck.metadata["m_hidden"] = std::to_string(m_lstm_.hidden_dim());
  ck.metadata["head_hidden"] = std::to_string(u_head_.dims()[1]);
  std::ostringstream us, bs, ts;
  us.precision(17);
  bs.precision(17);
  ts.precision(17);
  us << u_scale_;
  bs << b_scale_;
  ts << tau_scale_;
  ck.metadata["u_scale"] = us.str();
  ck.metadata["b_scale"] = bs.str();
  ck.metadata["tau_scale"] = ts.str();
  auto* self = const_cast<MempoolModel*>(this);
  for (auto* p : self->params()) ck.tensors.push_back(*p);
  ck.save(path);
}

MempoolModel MempoolModel::load(const std::string& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta("kind") != "mempool")
    throw std::runtime_error("MempoolModel::load: not a mempool checkpoint");
  MempoolConfig cfg;
  cfg.noise_dim = static_cast<int>(ck.meta_num("noise_dim"));
  cfg.u_hidden = static_cast<int>(ck.meta_num("u_hidden"));
  cfg.m_hidden = static_cast<int>(ck.meta_num("m_hidden"));
  cfg.head_hidden = static_cast<int>(ck.meta_num("head_hidden"));
  MempoolModel m(parse_mp_variant(ck.meta("variant")), cfg, 1);
  m.set_scales(ck.meta_num("u_scale"), ck.meta_num("b_scale"),
               ck.meta_num("tau_scale"));
  ck.restore_into(m.params());
  return m;
}

// --- tape loss builders ---

namespace {

// Gamma NLL term of a normalized positive target from raw head output.
nn::ValueRef gamma_nll_term(nn::Tape& t, nn::ValueRef raw, Scalar target) {
  nn::ValueRef p = nsx::link_params(t, nsx::Family::Gamma, raw, 1.0);
  return t.neg(
      nsx::log_pdf_node(t, nsx::Family::Gamma, p, std::max(target, 1e-9)));
}

void check_range(const MempoolSeries& s, int begin, int end) {
  if (begin < 0 || end > s.size() - 1 || begin >= end)
    throw std::invalid_argument("mempool loss: bad index range");
}

}  // namespace

nn::ValueRef nmsg_u_loss_node(nn::Tape& t, MempoolModel& m,
                              const MempoolSeries& s, const Vec& h0,
                              const Vec& c0, int begin, int end, Vec* h_out,
                              Vec* c_out) {
  check_range(s, begin, end);
  nn::LstmCell::State st{t.constant(h0), t.constant(c0)};
  std::vector<nn::ValueRef> terms;
  for (int i = begin; i < end; ++i) {
    const Vec x = m.u_features(s.forward_gap(i), s.records[i].unconfirmed,
                               Vec::Zero(m.noise_dim()));
    st = m.u_lstm().step(t, t.constant(x), st);
    nn::ValueRef raw = m.u_head().forward(t, st.h);
    terms.push_back(
        gamma_nll_term(t, raw, s.records[i + 1].unconfirmed / m.u_scale()));
  }
  if (h_out) *h_out = t.value(st.h);
  if (c_out) *c_out = t.value(st.c);
  return t.mean(t.concat(terms));
}

nn::ValueRef ams_u_gen_loss_node(nn::Tape& t, MempoolModel& m, nn::Mlp& critic,
                                 const MempoolSeries& s, const Vec& h0,
                                 const Vec& c0, int begin, int end,
                                 Scalar lambda3, Rng& rng, Vec* h_out,
                                 Vec* c_out) {
  check_range(s, begin, end);
  nn::LstmCell::State st{t.constant(h0), t.constant(c0)};
  std::vector<nn::ValueRef> fs, gaps;
  for (int i = begin; i < end; ++i) {
    const Vec eps = rng.normal_vec(m.noise_dim());
    const Scalar gap = s.forward_gap(i);
    const Vec x = m.u_features(gap, s.records[i].unconfirmed, eps);
    st = m.u_lstm().step(t, t.constant(x), st);
    const Vec eps2 = rng.normal_vec(m.noise_dim());
    const std::vector<Vec> layer_noise = m.u_head().draw_noise(rng);
    nn::ValueRef in = t.concat({st.h, t.constant(eps2)});
    nn::ValueRef fake = t.softplus_(m.u_head().forward(t, in, &layer_noise));
    Vec cond(1);
    cond[0] = std::log1p(gap / m.tau_scale());
    nn::ValueRef f = critic.forward(t, t.concat({fake, t.constant(cond)}));
    fs.push_back(f);
    const Scalar target = s.records[i + 1].unconfirmed / m.u_scale();
    gaps.push_back(t.abs_(t.affine(fake, -1.0, target)));
  }
  if (h_out) *h_out = t.value(st.h);
  if (c_out) *c_out = t.value(st.c);
  nn::ValueRef loss = t.neg(t.mean(t.concat(fs)));
  return t.add(loss, t.scale(t.mean(t.concat(gaps)), lambda3));
}

nn::ValueRef block_loss_node(nn::Tape& t, MempoolModel& m,
                             const MempoolSeries& s,
                             const std::vector<MempoolModel::LstmState>& h_u,
                             const Vec& h0, const Vec& c0, int begin, int end,
                             Vec* h_out, Vec* c_out) {
  check_range(s, begin, end);
  nn::ValueRef vm = t.param(m.head_vm());
  nn::ValueRef vu = t.param(m.head_vu());
  nn::ValueRef w = t.param(m.head_w());
  nn::ValueRef b = t.param(m.head_b());
  nn::LstmCell::State st{t.constant(h0), t.constant(c0)};
  std::vector<nn::ValueRef> terms;
  for (int i = begin; i < end; ++i) {
    const Vec x = m.m_features(s.records[i].accepted, s.inter_block(i));
    st = m.m_lstm().step(t, t.constant(x), st);
    nn::ValueRef alpha =
        t.add(t.add(t.dot(vm, st.h), t.dot(vu, t.constant(h_u[i].h))), b);
    terms.push_back(rpp::log_f_star_node(
        t, alpha, w, s.inter_block(i + 1) / m.tau_scale()));
  }
  if (h_out) *h_out = t.value(st.h);
  if (c_out) *c_out = t.value(st.c);
  return t.neg(t.mean(t.concat(terms)));
}

nn::ValueRef nmsg_accepted_loss_node(
    nn::Tape& t, MempoolModel& m, const MempoolSeries& s,
    const std::vector<MempoolModel::LstmState>& h_m,
    const std::vector<MempoolModel::LstmState>& h_u, int begin, int end) {
  check_range(s, begin, end);
  std::vector<nn::ValueRef> terms;
  for (int i = begin; i < end; ++i) {
    Vec in(m.m_hidden() + m.u_hidden());
    in.head(m.m_hidden()) = h_m[i].h;
    in.tail(m.u_hidden()) =
        i > 0 ? h_u[i - 1].h : Vec::Zero(m.u_hidden()).eval();
    nn::ValueRef raw = m.accepted_head().forward(t, t.constant(in));
    terms.push_back(
        gamma_nll_term(t, raw, s.records[i + 1].accepted / m.b_scale()));
  }
  return t.mean(t.concat(terms));
}

nn::ValueRef ams_accepted_gen_loss_node(
    nn::Tape& t, MempoolModel& m, nn::Mlp& critic, const MempoolSeries& s,
    const std::vector<MempoolModel::LstmState>& h_m,
    const std::vector<MempoolModel::LstmState>& h_u, int begin, int end,
    Scalar lambda3, Rng& rng) {
  check_range(s, begin, end);
  std::vector<nn::ValueRef> fs, gaps;
  for (int i = begin; i < end; ++i) {
    Vec in(m.m_hidden() + m.u_hidden() + m.noise_dim());
    in.head(m.m_hidden()) = h_m[i].h;
    in.segment(m.m_hidden(), m.u_hidden()) =
        i > 0 ? h_u[i - 1].h : Vec::Zero(m.u_hidden()).eval();
    in.tail(m.noise_dim()) = rng.normal_vec(m.noise_dim());
    const std::vector<Vec> layer_noise = m.accepted_head().draw_noise(rng);
    nn::ValueRef fake = t.softplus_(
        m.accepted_head().forward(t, t.constant(in), &layer_noise));
    fs.push_back(critic.forward(t, fake));
    const Scalar target = s.records[i + 1].accepted / m.b_scale();
    gaps.push_back(t.abs_(t.affine(fake, -1.0, target)));
  }
  nn::ValueRef loss = t.neg(t.mean(t.concat(fs)));
  return t.add(loss, t.scale(t.mean(t.concat(gaps)), lambda3));
}

nn::ValueRef mp_critic_loss_node(nn::Tape& t, nn::Mlp& critic,
                                 const std::vector<CondSample>& real,
                                 const std::vector<CondSample>& fake,
                                 Scalar lambda1, Rng& rng) {
  if (real.empty() || fake.empty())
    throw std::invalid_argument("mp_critic_loss: empty batch");
  auto input = [&](Scalar value, const Vec& cond) {
    Vec in(1 + cond.size());
    in[0] = value;
    if (cond.size() > 0) in.tail(cond.size()) = cond;
    return in;
  };
  std::vector<nn::ValueRef> f_real, f_fake, penalty;
  for (const auto& r : real)
    f_real.push_back(critic.forward(t, t.constant(input(r.value, r.cond))));
  for (const auto& f : fake)
    f_fake.push_back(critic.forward(t, t.constant(input(f.value, f.cond))));
  const int n = static_cast<int>(std::min(real.size(), fake.size()));
  for (int i = 0; i < n; ++i) {
    const CondSample& r = real[rng.index(static_cast<int>(real.size()))];
    const CondSample& f = fake[rng.index(static_cast<int>(fake.size()))];
    const Scalar u = rng.uniform();
    const Scalar s_hat = u * r.value + (1.0 - u) * f.value;
    auto wg = critic.forward_with_input_grad(
        t, t.constant(input(s_hat, r.cond)), 0);
    nn::ValueRef excess = t.relu_(t.affine(t.abs_(wg.din_coord), 1.0, -1.0));
    penalty.push_back(t.square_(excess));
  }
  nn::ValueRef loss =
      t.sub(t.mean(t.concat(f_fake)), t.mean(t.concat(f_real)));
  return t.add(loss, t.scale(t.mean(t.concat(penalty)), lambda1));
}

namespace {

std::vector<Vec> take_snapshot(MempoolModel& m) {
  std::vector<Vec> out;
  for (auto* p : m.params()) out.push_back(p->values);
  return out;
}

void restore_snapshot(MempoolModel& m, const std::vector<Vec>& snap) {
  auto ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->values = snap[i];
}

}  // namespace

MempoolModel train_mempool(MpVariant variant, const MempoolSeries& series,
                           const MempoolConfig& cfg) {
  series.validate();
  const int n = series.size();
  if (n < 3)
    throw std::invalid_argument("train_mempool: need at least 3 records");

  MempoolModel model(variant, cfg, cfg.seed);
  model.fit_scales(series);
  Rng rng(cfg.seed + 17);

  nn::Adam::Config acfg;
  acfg.lr = cfg.lr;
  nn::Adam opt_u(model.u_params(), acfg);
  nn::Adam opt_block(model.block_params(), acfg);
  nn::Adam opt_acc(model.accepted_params(), acfg);

  // Critics live only inside training.
  nn::Mlp u_critic, acc_critic;
  nn::Adam opt_ucr, opt_acr;
  if (variant == MpVariant::AMS) {
    const int c = cfg.critic_hidden;
    u_critic = nn::Mlp("mp.ucritic", {2, c, c, c, 1}, rng);
    acc_critic = nn::Mlp("mp.acritic", {1, c, c, c, 1}, rng);
    std::vector<nn::ParamTensor*> up, ap;
    for (auto& p : u_critic.params()) up.push_back(&p);
    for (auto& p : acc_critic.params()) ap.push_back(&p);
    opt_ucr = nn::Adam(up, acfg);
    opt_acr = nn::Adam(ap, acfg);
  }

  std::vector<Vec> last_good = take_snapshot(model);
  auto abort_nan = [&](const char* which) {
    restore_snapshot(model, last_good);
    throw std::runtime_error(std::string("train_mempool: ") + which +
                             " loss diverged (NaN); restored last good "
                             "parameters");
  };

  // One critic tape step from value-level fake draws.
  auto critic_step = [&](nn::Mlp& critic, nn::Adam& opt, bool u_model,
                         const std::vector<MempoolModel::LstmState>& hu,
                         const std::vector<MempoolModel::LstmState>& hm) {
    std::vector<CondSample> real, fake;
    const int bs = std::min(cfg.batch_size, n - 1);
    for (int k = 0; k < bs; ++k) {
      const int i = rng.index(n - 1);
      CondSample r, f;
      if (u_model) {
        Vec cond(1);
        cond[0] = std::log1p(series.forward_gap(i) / model.tau_scale());
        r.cond = cond;
        f.cond = cond;
        r.value = series.records[i + 1].unconfirmed / model.u_scale();
        f.value = model.sample_u(hu[i].h, rng) / model.u_scale();
      } else {
        r.cond = Vec();
        f.cond = Vec();
        r.value = series.records[i + 1].accepted / model.b_scale();
        const Vec hup =
            i > 0 ? hu[i - 1].h : Vec::Zero(model.u_hidden()).eval();
        f.value = model.generate_accepted(hm[i].h, hup, rng,
                                          std::numeric_limits<Scalar>::max()) /
                  model.b_scale();
      }
      real.push_back(std::move(r));
      fake.push_back(std::move(f));
    }
    nn::Tape t;
    nn::ValueRef loss =
        mp_critic_loss_node(t, critic, real, fake, cfg.lambda1, rng);
    if (!std::isfinite(t.scalar(loss))) abort_nan("critic");
    opt.zero_grad();
    t.backward(loss);
    opt.step();
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Teacher-forced states, refreshed each epoch (fresh eps for AMS).
    const auto hu = model.u_states(series, cfg.seed + 1000 + epoch);
    const auto hm = model.m_states(series);

    Scalar u_loss_acc = 0.0, block_loss_acc = 0.0, acc_loss_acc = 0.0;
    int u_windows = 0, block_windows = 0;

    // (i) backlog model
    {
      Vec h = Vec::Zero(model.u_hidden()), c = Vec::Zero(model.u_hidden());
      int i = 0;
      while (i < n - 1) {
        const int j = std::min(i + cfg.bptt_window, n - 1);
        nn::Tape t;
        nn::ValueRef loss;
        if (variant == MpVariant::NMS_G) {
          loss = nmsg_u_loss_node(t, model, series, h, c, i, j, &h, &c);
        } else {
          for (int k = 0; k < cfg.critic_steps_per_gen; ++k)
            critic_step(u_critic, opt_ucr, true, hu, hm);
          loss = ams_u_gen_loss_node(t, model, u_critic, series, h, c, i, j,
                                     cfg.lambda3, rng, &h, &c);
        }
        if (!std::isfinite(t.scalar(loss))) abort_nan("backlog");
        opt_u.zero_grad();
        for (auto& p : u_critic.params()) p.zero_grad();
        t.backward(loss);
        opt_u.step();
        u_loss_acc += t.scalar(loss);
        ++u_windows;
        i = j;
      }
    }

    // (ii) block-creation RPP
    {
      Vec h = Vec::Zero(model.m_hidden()), c = Vec::Zero(model.m_hidden());
      int i = 0;
      while (i < n - 1) {
        const int j = std::min(i + cfg.bptt_window, n - 1);
        nn::Tape t;
        nn::ValueRef loss =
            block_loss_node(t, model, series, hu, h, c, i, j, &h, &c);
        if (!std::isfinite(t.scalar(loss))) abort_nan("block");
        opt_block.zero_grad();
        t.backward(loss);
        opt_block.step();
        block_loss_acc += t.scalar(loss);
        ++block_windows;
        i = j;
      }
    }

    // (iii) accepted model
    {
      if (variant == MpVariant::NMS_G) {
        nn::Tape t;
        nn::ValueRef loss =
            nmsg_accepted_loss_node(t, model, series, hm, hu, 0, n - 1);
        if (!std::isfinite(t.scalar(loss))) abort_nan("accepted");
        opt_acc.zero_grad();
        t.backward(loss);
        opt_acc.step();
        acc_loss_acc = t.scalar(loss);
      } else {
        for (int k = 0; k < cfg.critic_steps_per_gen; ++k)
          critic_step(acc_critic, opt_acr, false, hu, hm);
        nn::Tape t;
        nn::ValueRef loss = ams_accepted_gen_loss_node(
            t, model, acc_critic, series, hm, hu, 0, n - 1, cfg.lambda3, rng);
        if (!std::isfinite(t.scalar(loss))) abort_nan("accepted");
        opt_acc.zero_grad();
        for (auto& p : acc_critic.params()) p.zero_grad();
        t.backward(loss);
        opt_acc.step();
        acc_loss_acc = t.scalar(loss);
      }
    }

    last_good = take_snapshot(model);
    if (cfg.verbose)
      std::cerr << "[mempool] epoch " << epoch + 1 << "/" << cfg.epochs
                << " u=" << u_loss_acc / std::max(u_windows, 1)
                << " block=" << block_loss_acc / std::max(block_windows, 1)
                << " accepted=" << acc_loss_acc << "\n";
  }
  return model;
}

}  // namespace servtime::mempool
