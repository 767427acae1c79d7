#pragma once

#include "pfl/fl_types.hpp"

namespace pfl {

/// One client round update under the given personalization strategy. The
/// training set is passed explicitly because malicious clients substitute a
/// poisoned mixture; strategy-private state lives in `client` and nothing
/// else is mutated.
LocalStepResult local_step(const StrategyConfig& sc, const MlpConfig& model,
                           const std::vector<double>& global, ClientState& client,
                           const Dataset& train_data, const RoundKnobs& rk,
                           const StrategyServerState& server, uint64_t step_seed);

/// The personalized model a client evaluates with: fine-tuning for the
/// full-sharing strategies, the private model for Ditto, global encoder plus
/// private head for FedRep, blended initialization for FedALA.
std::vector<double> personalize(const StrategyConfig& sc, const MlpConfig& model,
                                const std::vector<double>& global, const ClientState& client,
                                int epochs, double lr, int batch_size);

} // namespace pfl
