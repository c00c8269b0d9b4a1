#include "smoothrl/envs/env.hpp"

#include <algorithm>
#include <stdexcept>

#include "smoothrl/envs/grid_reach.hpp"
#include "smoothrl/envs/point_reach.hpp"
#include "smoothrl/io/csv.hpp"

namespace smoothrl::envs {

bool Box::contains(std::span<const double> x) const {
  if (x.size() != low.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < low[i] || x[i] > high[i]) return false;
  }
  return true;
}

void Box::clip(std::span<double> x) const {
  for (std::size_t i = 0; i < x.size() && i < low.size(); ++i) x[i] = std::clamp(x[i], low[i], high[i]);
}

int EnvSpec::num_actions() const {
  if (const auto* d = std::get_if<Discrete>(&action_space)) return d->n;
  throw std::logic_error("EnvSpec::num_actions on a continuous action space");
}

std::size_t EnvSpec::action_dim() const {
  if (const auto* b = std::get_if<Box>(&action_space)) return b->dim();
  return 1;
}

void Trajectory::push(Transition t) {
  total_reward += t.reward;
  transitions.push_back(std::move(t));
}

Transition Environment::finish_step(Transition tr) {
  ++t_;
  if (t_ >= spec().horizon) tr.done = true;
  done_ = tr.done;
  state_ = tr.next_state;
  return tr;
}

std::unique_ptr<Environment> make_env(std::string_view id) {
  if (id == "gridreach") return std::make_unique<GridReach>();
  if (id == "pointreach") return std::make_unique<PointReach>();
  throw std::invalid_argument("unknown environment '" + std::string(id) +
                              "' (expected gridreach or pointreach)");
}

std::string trajectory_log_csv(const EnvSpec& spec, std::span<const Trajectory> episodes) {
  std::vector<std::string> header{"episode", "t"};
  for (std::size_t i = 0; i < spec.obs_dim; ++i) header.push_back("s" + std::to_string(i));
  for (std::size_t i = 0; i < spec.action_dim(); ++i) header.push_back("a" + std::to_string(i));
  header.push_back("reward");
  header.push_back("done");
  io::CsvWriter csv(header);
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& tr = episodes[e].transitions;
    for (std::size_t t = 0; t < tr.size(); ++t) {
      std::vector<std::string> row{std::to_string(e), std::to_string(t)};
      for (double s : tr[t].state) row.push_back(io::format_double(s));
      if (const int* a = std::get_if<int>(&tr[t].action)) {
        row.push_back(std::to_string(*a));
      } else {
        for (double a : std::get<Vector>(tr[t].action)) row.push_back(io::format_double(a));
      }
      row.push_back(io::format_double(tr[t].reward));
      row.push_back(tr[t].done ? "1" : "0");
      csv.row(row);
    }
  }
  return csv.str();
}

}  // namespace smoothrl::envs
