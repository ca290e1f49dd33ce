#pragma once
// Checkpoint files: a trained potential network plus its frozen evaluation
// bank, serialized as JSON. Parameter blocks are stored by layout name so a
// file survives reordering of unrelated blocks; doubles round-trip exactly
// (shortest-representation printing).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvqr/error.hpp"
#include "mvqr/potential.hpp"
#include "mvqr/solver.hpp"

namespace mvqr {

constexpr int kCheckpointSchema = 1;

struct Checkpoint {
  PotentialNetwork net;
  std::vector<Point> eval_bank;
  double gamma_conjugate = 0.1;
  int step_count = 0;
};

inline Checkpoint checkpoint_from_result(const TrainResult& r) {
  return Checkpoint{r.net, r.eval_bank, r.gamma_conjugate, r.step_count};
}

namespace ckpt_detail {

inline ModelShape infer_shape(const PotentialNetwork& net) {
  ModelShape s;
  s.support_points = static_cast<int>(net.beta0.layers.at(0).support.size());
  s.layers = static_cast<int>(net.beta0.layers.size());
  s.gamma = net.beta0.layers.at(0).gamma;
  for (const auto& stage : net.stacks) s.stack_widths.push_back(static_cast<int>(stage.size()));
  return s;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::ordered_json j;
  j["schema_version"] = kCheckpointSchema;
  j["manifold"] = manifold_name(ck.net.manifold);
  j["covariate_dim"] = ck.net.covariate_dim;
  ModelShape shape = ckpt_detail::infer_shape(ck.net);
  j["shape"] = {{"support_points", shape.support_points},
                {"layers", shape.layers},
                {"stack_widths", shape.stack_widths},
                {"gamma", shape.gamma}};
  j["gamma_conjugate"] = ck.gamma_conjugate;
  j["step_count"] = ck.step_count;

  ParamLayout lay = make_layout(ck.net);
  std::vector<double> flat;
  pack_params(ck.net, flat);
  nlohmann::ordered_json params;
  for (const ParamBlock& b : lay.blocks)
    params[b.name] = std::vector<double>(flat.begin() + static_cast<long>(b.offset),
                                         flat.begin() + static_cast<long>(b.offset + b.size));
  j["params"] = std::move(params);

  int ambient = ambient_dim(ck.net.manifold);
  nlohmann::ordered_json bank = nlohmann::ordered_json::array();
  for (const Point& p : ck.eval_bank) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < ambient; ++c) row.push_back(p[static_cast<std::size_t>(c)]);
    bank.push_back(std::move(row));
  }
  j["eval_bank"] = std::move(bank);

  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(1, '\t') << "\n";
  if (!out) throw Error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchema)
      throw VersionError(path + ": schema_version " + std::to_string(version) +
                         " (expected " + std::to_string(kCheckpointSchema) + ")");

    Checkpoint ck;
    Manifold m = manifold_from_name(j.at("manifold").get<std::string>());
    int covariate_dim = j.at("covariate_dim").get<int>();
    ModelShape shape;
    shape.support_points = j.at("shape").at("support_points").get<int>();
    shape.layers = j.at("shape").at("layers").get<int>();
    shape.stack_widths = j.at("shape").at("stack_widths").get<std::vector<int>>();
    shape.gamma = j.at("shape").at("gamma").get<double>();
    ck.gamma_conjugate = j.at("gamma_conjugate").get<double>();
    ck.step_count = j.at("step_count").get<int>();

    Rng dummy(0, stream::kInit);
    ck.net = make_network(m, shape, covariate_dim, dummy);
    ParamLayout lay = make_layout(ck.net);
    std::vector<double> flat(lay.total, 0.0);
    const auto& params = j.at("params");
    for (const ParamBlock& b : lay.blocks) {
      if (!params.contains(b.name))
        throw ParseError(path + ": missing parameter block " + b.name);
      auto vals = params.at(b.name).get<std::vector<double>>();
      if (vals.size() != b.size)
        throw ParseError(path + ": block " + b.name + " has " +
                         std::to_string(vals.size()) + " values, expected " +
                         std::to_string(b.size));
      std::copy(vals.begin(), vals.end(), flat.begin() + static_cast<long>(b.offset));
    }
    unpack_params(ck.net, flat);

    int ambient = ambient_dim(m);
    for (const auto& row : j.at("eval_bank")) {
      if (static_cast<int>(row.size()) != ambient)
        throw ParseError(path + ": eval bank point has wrong dimension");
      Point p{0.0, 0.0, 0.0, 0.0};
      for (int c = 0; c < ambient; ++c) p[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c)].get<double>();
      // keep stored coordinates verbatim (projection could cost an ulp);
      // just check they are on the manifold
      Point chk = project(m, p);
      for (int c = 0; c < ambient; ++c)
        if (std::abs(chk[static_cast<std::size_t>(c)] - p[static_cast<std::size_t>(c)]) > 1e-9)
          throw ParseError(path + ": eval bank point off the manifold");
      ck.eval_bank.push_back(p);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace mvqr
