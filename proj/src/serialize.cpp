#include "jmod2/serialize.hpp"

#include <cstdio>
#include <optional>
#include <sstream>

namespace jmod2 {
namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string csv_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string csv_value(const std::optional<double>& v) { return v ? csv_value(*v) : std::string(); }

}  // namespace

nlohmann::json to_json(const ObstacleBox& box) {
  return {{"x_min", box.x_min},           {"y_min", box.y_min},
          {"x_max", box.x_max},           {"y_max", box.y_max},
          {"mean_depth", box.mean_depth}, {"var_depth", box.var_depth}};
}

ObstacleBox box_from_json(const nlohmann::json& j) {
  ObstacleBox b;
  b.x_min = j.at("x_min").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.y_max = j.at("y_max").get<double>();
  b.mean_depth = j.at("mean_depth").get<double>();
  b.var_depth = j.at("var_depth").get<double>();
  return b;
}

nlohmann::json boxes_to_json(std::span<const ObstacleBox> boxes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ObstacleBox& b : boxes) arr.push_back(to_json(b));
  return arr;
}

std::vector<ObstacleBox> boxes_from_json(const nlohmann::json& j) {
  std::vector<ObstacleBox> out;
  for (const auto& e : j) out.push_back(box_from_json(e));
  return out;
}

nlohmann::json to_json(const Detection& det) {
  nlohmann::json j = to_json(det.box);
  j["confidence"] = det.confidence;
  j["cell"] = {det.row, det.col};
  return j;
}

nlohmann::json detections_to_json(std::span<const Detection> dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Detection& d : dets) arr.push_back(to_json(d));
  return arr;
}

nlohmann::json to_json(const LossBreakdown& l) {
  return {{"depth_scale_inv", l.depth_scale_inv}, {"depth_grad_normal", l.depth_grad_normal},
          {"det_coord", l.det_coord},             {"det_size", l.det_size},
          {"det_conf_obj", l.det_conf_obj},       {"det_conf_noobj", l.det_conf_noobj},
          {"det_mean", l.det_mean},               {"det_var", l.det_var},
          {"total", l.total}};
}

nlohmann::json to_json(const StepLog& entry) {
  nlohmann::json j = to_json(entry.loss);
  j["step"] = entry.step;
  return j;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"rmse_linear", r.rmse_linear},
          {"sc_inv_rmse", r.sc_inv_rmse},
          {"depth_obs_rmse_mean", optional_json(r.depth_obs_rmse_mean)},
          {"depth_obs_rmse_var", optional_json(r.depth_obs_rmse_var)},
          {"det_obs_rmse_mean", optional_json(r.det_obs_rmse_mean)},
          {"det_obs_rmse_var", optional_json(r.det_obs_rmse_var)},
          {"iou_mean", optional_json(r.iou_mean)},
          {"precision", r.precision},
          {"recall", r.recall},
          {"n_gt", r.n_gt},
          {"n_det", r.n_det},
          {"n_matched", r.n_matched}};
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "rmse_linear,sc_inv_rmse,depth_obs_rmse_mean,depth_obs_rmse_var,det_obs_rmse_mean,det_obs_rmse_var,"
         "iou_mean,precision,recall,n_gt,n_det,n_matched\n";
  out << csv_value(r.rmse_linear) << ',' << csv_value(r.sc_inv_rmse) << ',' << csv_value(r.depth_obs_rmse_mean) << ','
      << csv_value(r.depth_obs_rmse_var) << ',' << csv_value(r.det_obs_rmse_mean) << ','
      << csv_value(r.det_obs_rmse_var) << ',' << csv_value(r.iou_mean) << ',' << csv_value(r.precision) << ','
      << csv_value(r.recall) << ',' << r.n_gt << ',' << r.n_det << ',' << r.n_matched << '\n';
  return out.str();
}

nlohmann::json to_json(const CropTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const CropRow& r : table.rows) {
    rows.push_back({{"crop", std::to_string(r.crop.width) + "x" + std::to_string(r.crop.height)},
                    {"crop_w", r.crop.width},
                    {"crop_h", r.crop.height},
                    {"focal_multiplier", r.focal_multiplier},
                    {"correction", r.corrected ? "Cor" : "NoCor"},
                    {"rmse", r.rmse},
                    {"sc_inv_rmse", r.sc_inv},
                    {"depth_obs_rmse_mean", optional_json(r.depth_obs_rmse_mean)},
                    {"det_obs_rmse_mean", optional_json(r.det_obs_rmse_mean)},
                    {"mean_k", r.mean_k},
                    {"images_corrected", r.images_corrected}});
  }
  return {{"rows", rows}};
}

std::string crop_table_csv(const CropTable& table) {
  std::ostringstream out;
  out << "crop,focal_multiplier,correction,rmse,sc_inv_rmse,depth_obs_rmse_mean,det_obs_rmse_mean,mean_k\n";
  for (const CropRow& r : table.rows) {
    out << r.crop.width << 'x' << r.crop.height << ',' << csv_value(r.focal_multiplier) << ','
        << (r.corrected ? "Cor" : "NoCor") << ',' << csv_value(r.rmse) << ',' << csv_value(r.sc_inv) << ','
        << csv_value(r.depth_obs_rmse_mean) << ',' << csv_value(r.det_obs_rmse_mean) << ',' << csv_value(r.mean_k)
        << '\n';
  }
  return out.str();
}

}  // namespace jmod2
