#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "servtime/nn/adam.hpp"
#include "servtime/nn/layers.hpp"
#include "servtime/rng.hpp"
#include "servtime/rpp/head.hpp"
#include "servtime/types.hpp"

namespace servtime::mempool {

// One per-block observation: unconfirmed backlog just before the block at
// d_i, and the number of transactions the block accepted.
struct MempoolRecord {
  Scalar block_time = 0.0;
  Scalar unconfirmed = 0.0;
  Scalar accepted = 0.0;
};

struct MempoolSeries {
  std::vector<MempoolRecord> records;
  Scalar horizon = 0.0;

  int size() const { return static_cast<int>(records.size()); }
  // Gap into record i: d_i - d_{i-1}, with d_{-1} = 0.
  Scalar inter_block(int i) const;
  // Gap out of record i: d_{i+1} - d_i. The u-recurrence consumes this
  // forward gap, so the one-step backlog forecast conditions on the next
  // block's creation time (its announcement) but not its contents.
  Scalar forward_gap(int i) const;
  void validate() const;
};

// CSV columns: block_time,unconfirmed_count,accepted_count (header row
// required). Horizon defaults to the last block time when not given.
MempoolSeries ingest_mempool_csv(const std::string& path,
                                 Scalar horizon = -1.0);
void write_mempool_csv(const MempoolSeries& series, const std::string& path);

// Synthetic backlog: u grows linearly at `rate` between blocks; blocks
// arrive at Poisson rate `block_rate` and each accepts half the backlog.
MempoolSeries simulate_sawtooth(Scalar rate, Scalar block_rate, Scalar horizon,
                                std::uint64_t seed, Scalar u0 = 0.0);

enum class MpVariant { NMS_G, AMS };

MpVariant parse_mp_variant(const std::string& name);
std::string mp_variant_name(MpVariant v);

struct MempoolConfig {
  int u_hidden = 16;     // u-recurrence LSTM width
  int m_hidden = 16;     // block-recurrence LSTM width
  int head_hidden = 16;  // emission MLPs, 3 hidden layers of this width
  int critic_hidden = 16;
  int noise_dim = 4;
  int epochs = 30;
  int bptt_window = 64;
  int batch_size = 64;
  int critic_steps_per_gen = 5;
  Scalar lambda1 = 10.0;  // Lipschitz penalty weight (AMS)
  Scalar lambda3 = 1.0;   // matching penalty weight (AMS)
  Scalar lr = 1e-4;
  std::uint64_t seed = 1;
  bool verbose = false;
};

// Three coupled submodels: an LSTM over (eps, forward gap, u) whose head
// emits the next backlog (Gamma parameters for NMS-G, a noise-injected MLP
// sample for AMS); an LSTM over (accepted, inter-block gap) feeding a block
// intensity exp(v_M.h^M + v_U.h^U + w dt + b); and an accepted-count head
// on (h^M_i, h^U_{i-1}). Counts are modeled as positive reals on a stored
// mean scale; public emissions are in original units.
class MempoolModel {
 public:
  MempoolModel() = default;
  MempoolModel(MpVariant variant, const MempoolConfig& cfg,
               std::uint64_t seed);

  MpVariant variant() const { return variant_; }
  int noise_dim() const { return noise_dim_; }
  int u_hidden() const { return u_lstm_.hidden_dim(); }
  int m_hidden() const { return m_lstm_.hidden_dim(); }

  struct LstmState {
    Vec h, c;
  };
  LstmState initial_u_state() const;
  LstmState initial_m_state() const;

  // Features for one u-recurrence step: (eps, log1p gap, log1p u), scaled.
  Vec u_features(Scalar forward_gap, Scalar u, const Vec& eps) const;
  Vec m_features(Scalar accepted, Scalar inter_block) const;

  LstmState step_u(const LstmState& s, Scalar forward_gap, Scalar u,
                   const Vec& eps) const;
  LstmState step_blocks(const LstmState& s, Scalar accepted,
                        Scalar inter_block) const;

  // Gamma parameters {shape, rate} of the next backlog in original units
  // (NMS-G only).
  Vec u_gamma_params(const Vec& h_u) const;
  // One draw of the next backlog, original units. NMS-G samples its Gamma;
  // AMS runs the noise-injected head.
  Scalar sample_u(const Vec& h_u, Rng& rng) const;
  // Predictive mean: exact for NMS-G, Monte Carlo (n_mc draws) for AMS.
  Scalar predict_u_mean(const Vec& h_u, int n_mc, Rng& rng) const;

  // Block-creation intensity head; alpha = v_M.h^M + v_U.h^U + b, in the
  // model's normalized time, so all rpp closed forms apply unchanged.
  Scalar block_alpha(const Vec& h_m, const Vec& h_u) const;
  rpp::ExpHead block_head(const Vec& h_m, const Vec& h_u) const;
  Scalar block_intensity(const Vec& h_m, const Vec& h_u, Scalar dt) const;

  // Accepted-count emission from (h^M_i, h^U_{i-1}).
  Vec accepted_gamma_params(const Vec& h_m, const Vec& h_u_prev) const;
  // One accepted-count draw, clamped to the current backlog u_cap.
  Scalar generate_accepted(const Vec& h_m, const Vec& h_u_prev, Rng& rng,
                           Scalar u_cap) const;

  // Teacher-forced state sequences, one entry per record. u_states[i] is
  // h^U_i (after consuming u_i and the gap to block i+1; the last record
  // reuses the mean gap). AMS draws its eps stream from `seed`.
  std::vector<LstmState> u_states(const MempoolSeries& s,
                                  std::uint64_t seed) const;
  std::vector<LstmState> m_states(const MempoolSeries& s) const;

  // One-step backlog forecasts: entry i predicts u_{i+1} from h^U_i, for
  // i = 0..n-2. Original units.
  std::vector<Scalar> predict_u_one_step(const MempoolSeries& s, int n_mc,
                                         std::uint64_t seed) const;

  // Mean block log-likelihood per gap (normalized time), teacher forced.
  Scalar block_mean_log_likelihood(const MempoolSeries& s,
                                   std::uint64_t seed) const;

  Scalar u_scale() const { return u_scale_; }
  Scalar b_scale() const { return b_scale_; }
  Scalar tau_scale() const { return tau_scale_; }
  void set_scales(Scalar u_scale, Scalar b_scale, Scalar tau_scale);
  void fit_scales(const MempoolSeries& s);

  nn::LstmCell& u_lstm() { return u_lstm_; }
  nn::LstmCell& m_lstm() { return m_lstm_; }
  nn::Mlp& u_head() { return u_head_; }
  nn::Mlp& accepted_head() { return acc_head_; }
  nn::ParamTensor& head_vm() { return head_vm_; }
  nn::ParamTensor& head_vu() { return head_vu_; }
  nn::ParamTensor& head_w() { return head_w_; }
  nn::ParamTensor& head_b() { return head_b_; }

  std::vector<nn::ParamTensor*> u_params();      // g_theta + u head
  std::vector<nn::ParamTensor*> block_params();  // g~_phi + intensity head
  std::vector<nn::ParamTensor*> accepted_params();
  std::vector<nn::ParamTensor*> params();

  void save(const std::string& path) const;
  static MempoolModel load(const std::string& path);

 private:
  MpVariant variant_ = MpVariant::NMS_G;
  int noise_dim_ = 0;
  nn::LstmCell u_lstm_, m_lstm_;
  nn::Mlp u_head_, acc_head_;
  nn::ParamTensor head_vm_, head_vu_, head_w_, head_b_;
  Scalar u_scale_ = 1.0, b_scale_ = 1.0, tau_scale_ = 1.0;
};

// --- tape loss builders, shared by training and the gradient tests ---

// NMS-G backlog objective: mean Gamma NLL of u_{i+1} (normalized) over
// i in [begin, end), unrolling the u-LSTM on the tape from (h0, c0).
// Final detached state lands in *h_out/*c_out when non-null.
nn::ValueRef nmsg_u_loss_node(nn::Tape& t, MempoolModel& m,
                              const MempoolSeries& s, const Vec& h0,
                              const Vec& c0, int begin, int end,
                              Vec* h_out = nullptr, Vec* c_out = nullptr);

// AMS backlog generator objective: -mean critic(fake) + lambda3 mean
// |u - fake| with the u-LSTM unrolled on the tape. Critic parameters join
// the tape; the caller zeroes their grads after backward.
nn::ValueRef ams_u_gen_loss_node(nn::Tape& t, MempoolModel& m,
                                 nn::Mlp& critic, const MempoolSeries& s,
                                 const Vec& h0, const Vec& c0, int begin,
                                 int end, Scalar lambda3, Rng& rng,
                                 Vec* h_out = nullptr, Vec* c_out = nullptr);

// Block objective: -mean log f*(tau~_{i+1}) with alpha_i from the tape
// block-LSTM state and the (constant) teacher-forced h^U_i.
nn::ValueRef block_loss_node(nn::Tape& t, MempoolModel& m,
                             const MempoolSeries& s,
                             const std::vector<MempoolModel::LstmState>& h_u,
                             const Vec& h0, const Vec& c0, int begin, int end,
                             Vec* h_out = nullptr, Vec* c_out = nullptr);

// NMS-G accepted objective: mean Gamma NLL of b_{i+1} (normalized) given
// the constant states (h^M_i, h^U_{i-1}), i in [begin, end).
nn::ValueRef nmsg_accepted_loss_node(
    nn::Tape& t, MempoolModel& m, const MempoolSeries& s,
    const std::vector<MempoolModel::LstmState>& h_m,
    const std::vector<MempoolModel::LstmState>& h_u, int begin, int end);

// AMS accepted generator objective on constant states.
nn::ValueRef ams_accepted_gen_loss_node(
    nn::Tape& t, MempoolModel& m, nn::Mlp& critic, const MempoolSeries& s,
    const std::vector<MempoolModel::LstmState>& h_m,
    const std::vector<MempoolModel::LstmState>& h_u, int begin, int end,
    Scalar lambda3, Rng& rng);

// WGAN critic objective shared by both adversarial submodels:
// mean f(fake) - mean f(real) + lambda1 * one-sided squared gradient
// penalty at uniform interpolates. Samples are (value, conditioning).
struct CondSample {
  Scalar value = 0.0;
  Vec cond;
};
nn::ValueRef mp_critic_loss_node(nn::Tape& t, nn::Mlp& critic,
                                 const std::vector<CondSample>& real,
                                 const std::vector<CondSample>& fake,
                                 Scalar lambda1, Rng& rng);

// Trains the three objectives jointly per epoch — backlog model, block
// RPP, accepted model, in that order — with recurrent states recomputed
// teacher-forced from the data each epoch. Gradients do not cross
// objectives through shared states.
MempoolModel train_mempool(MpVariant variant, const MempoolSeries& series,
                           const MempoolConfig& cfg);

}  // namespace servtime::mempool
