#pragma once

#include "emm/generate.hpp"
#include "emm/martingale.hpp"
#include "emm/pipeline.hpp"
#include "emm/tree.hpp"

#include <json.hpp>

#include <string>

namespace emm {

using json = nlohmann::ordered_json;

/// Tree file: {"dimension", "horizon", "nodes": [{"id", "parent", "p", "s"}]}
/// in parent-before-child order; "s" carries one inline process.
RawTree raw_tree_from_json(const json& j);
json raw_tree_to_json(const RawTree& raw);

RawTree load_raw_tree(const std::string& path);
void save_raw_tree(const std::string& path, const RawTree& raw, const GeneratorMetadata* meta = nullptr);

/// The "s" fields as an AdaptedProcess aligned with the validated tree.
AdaptedProcess inline_process(const ScenarioTree& tree, const RawTree& raw);

/// Sibling process file: {"process": {node id -> value or [values]}}.
json density_to_json(const ScenarioTree& tree, const Vector& z);

json martingale_report_to_json(const MartingaleReport& rep, const ScenarioTree& tree);
json localization_report_to_json(const LocalizationReport& rep);
json construction_report_to_json(const ConstructionReport& rep);

/// Per-leaf "id,P,Q,Z" rows.
std::string leaf_csv(const ScenarioTree& tree, const ScenarioTree& treeQ, const Vector& Z);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace emm
