#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmod2/groundtruth.hpp"
#include "jmod2/harness.hpp"
#include "jmod2/inference.hpp"
#include "jmod2/losses.hpp"
#include "jmod2/metrics.hpp"

namespace jmod2 {

// {x_min, y_min, x_max, y_max, mean_depth, var_depth}
nlohmann::json to_json(const ObstacleBox& box);
ObstacleBox box_from_json(const nlohmann::json& j);
nlohmann::json boxes_to_json(std::span<const ObstacleBox> boxes);
std::vector<ObstacleBox> boxes_from_json(const nlohmann::json& j);

// Box schema plus {confidence, cell: [row, col]}.
nlohmann::json to_json(const Detection& det);
nlohmann::json detections_to_json(std::span<const Detection> dets);

nlohmann::json to_json(const LossBreakdown& loss);
nlohmann::json to_json(const StepLog& entry);

// Absent obstacle metrics serialise as null.
nlohmann::json to_json(const MetricsReport& report);
// One header line and one data row, metric columns in results-table order,
// followed by the counts. Absent values are empty fields.
std::string metrics_csv(const MetricsReport& report);

nlohmann::json to_json(const CropTable& table);
// One row per crop preset x correction mode.
std::string crop_table_csv(const CropTable& table);

}  // namespace jmod2
