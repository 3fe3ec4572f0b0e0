#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpsse/central.hpp"
#include "dpsse/partition.hpp"

namespace dpsse {

enum class AdmmMode { Lse, Robust };
enum class AdmmInit { Flat, Vector };

struct AdmmConfig {
    double c = 1e4;       // augmented-Lagrangian constant, > 0
    double lambda = 0.0;  // l1 weight (robust mode)
    AdmmMode mode = AdmmMode::Lse;
    int max_iter = 500;
    AdmmInit init = AdmmInit::Flat;
    int record_every = 1;
    double tol = 1e-6;  // stop when the shared-state disagreement drops below this
    Eigen::VectorXd init_vector;  // global state, used when init == Vector

    void validate() const;
};

AdmmConfig load_admm_config(const std::string& json_text);
std::string save_admm_config(const AdmmConfig& config);

/// What one area sends per exchange round: shared bus states only, never
/// measurements or regression rows.
struct ExchangePayload {
    int sender = 0;
    struct Entry {
        int bus;  // global bus index
        double e;
        double f;
    };
    struct NeighborBlock {
        int neighbor;
        std::vector<Entry> entries;  // S_{sender,neighbor} in global bus order
    };
    std::vector<NeighborBlock> blocks;
};

/// Delivery policy for the simulated inter-area exchange.
class Transport {
  public:
    virtual ~Transport() = default;
    /// Whether the round's message from `from_area` to `to_area` arrives.
    virtual bool delivered(int round, int from_area, int to_area) = 0;
    /// Strict transports guarantee delivery; a missing payload is then a
    /// synchronization error instead of a reuse-last-value event.
    virtual bool strict() const = 0;
};

class StrictTransport : public Transport {
  public:
    bool delivered(int, int, int) override { return true; }
    bool strict() const override { return true; }
};

/// Drops each directed message independently with probability p_drop.
/// Receivers fall back to the last delivered value.
class LossyTransport : public Transport {
  public:
    LossyTransport(double p_drop, std::uint64_t seed) : p_drop_(p_drop), rng_(seed) {}
    bool delivered(int, int, int) override { return rng_.uniform01() >= p_drop_; }
    bool strict() const override { return false; }

  private:
    double p_drop_;
    Rng rng_;
};

struct RunTrace {
    std::vector<int> iteration;
    std::vector<std::vector<double>> e_kc;  // per recorded point, per area
    std::vector<std::vector<double>> e_ko;
    std::vector<double> disagreement;
};

struct RunReportData {
    int iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;
    double final_disagreement = 0.0;
    Eigen::VectorXd stitched;  // owned value per bus, mean over holders on shared buses
    std::vector<Eigen::VectorXd> x_area;
    std::vector<std::vector<int>> identified_rows;  // global rows, per area (robust mode)
    RunTrace trace;
};

/// Decentralized consensus engine: the simplified iterates with the
/// closed-form local update, plus the thresholding step in robust mode.
class ConsensusEngine {
  public:
    ConsensusEngine(const GridCase& grid, const std::vector<AreaView>& views, const MeasurementModel& whitened_model,
                    AdmmConfig config);
    ~ConsensusEngine();
    ConsensusEngine(ConsensusEngine&&) noexcept;

    /// Runs until the disagreement tolerance or max_iter. Error curves are
    /// recorded when the corresponding reference vector is non-empty.
    RunReportData run(const Eigen::VectorXd& z, Transport& transport,
                      const Eigen::VectorXd& x_central = Eigen::VectorXd(),
                      const Eigen::VectorXd& x_true = Eigen::VectorXd());

    /// Assembles the current payload of one area (exposed for schema tests).
    ExchangePayload payload_of(int area, const std::vector<Eigen::VectorXd>& x_area) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Stitch per-area states into one global vector: the owner's value for
/// buses held by a single area, the mean over holders otherwise.
Eigen::VectorXd stitch_estimate(const std::vector<AreaView>& views, const std::vector<Eigen::VectorXd>& x_area,
                                int num_buses);

/// Reference three-step engine (per-area minimization, auxiliary-variable
/// average, multiplier ascent), kept dense and simple; used as the oracle
/// the simplified engine is checked against.
class ReferenceAdmm {
  public:
    ReferenceAdmm(const std::vector<AreaView>& views, const MeasurementModel& whitened_model, AdmmConfig config);
    ~ReferenceAdmm();

    void init(const Eigen::VectorXd& z);
    void step();

    const Eigen::VectorXd& x(int area) const;
    /// max |v_kl + v_lk| over all pairs (zero-sum multiplier check).
    double multiplier_zero_sum_max() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dpsse
