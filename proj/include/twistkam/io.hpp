// twistkam: JSON/CSV persistence for graphs, tori, and flat structures.
#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "twistkam/conjugacy.hpp"
#include "twistkam/kam.hpp"
#include "twistkam/variational.hpp"

namespace twistkam::io {

using json = nlohmann::json;

json fourier_to_json(const FourierMap& f);
FourierMap fourier_from_json(const json& j);

json graph_to_json(const InvariantGraph& g);
InvariantGraph graph_from_json(const json& j);

json torus_to_json(const EmbeddedTorus& t);
EmbeddedTorus torus_from_json(const json& j);

json flat_to_json(const FlatStructure& f);
FlatStructure flat_from_json(const json& j);

void write_json_file(const std::string& path, const json& j);
json read_json_file(const std::string& path);

// CSV with a header row; each row formatted at full double precision.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// graph.csv: theta, x (= theta), p per grid node.
void write_graph_csv(const std::string& path, const InvariantGraph& g, int grid_n);

// torus_m<k>.csv: theta, x, p sampled from an embedding theta -> (x, p).
void write_torus_csv(const std::string& path, int dim, int grid_n,
                     const std::function<CotangentPoint(const Vec&)>& embed);

}  // namespace twistkam::io
