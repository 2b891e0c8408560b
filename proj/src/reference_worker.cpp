#include "hierprobe/reference_worker.hpp"

#include <chrono>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

#include "hierprobe/error.hpp"
#include "hierprobe/protocol.hpp"

namespace hierprobe {

SegmentationMask segment_planted(const ImageBuffer& image) {
  const auto wall = estimate_wall_intersection(image);
  std::vector<std::uint32_t> labels(image.width() * image.height(), 0);
  if (wall.center_x) {
    for (std::size_t y = 0; y < image.height(); ++y) {
      for (std::size_t x = 0; x < image.width(); ++x) {
        std::uint32_t label = static_cast<double>(x) < *wall.center_x ? 1 : 3;
        if (!is_chromatic(rgb_to_hsv(image.at(x, y)))) label = 2;
        labels[y * image.width() + x] = label;
      }
    }
  }
  return SegmentationMask(image.width(), image.height(), std::move(labels),
                          {{0, "scene"}, {1, "left_wall"}, {2, "wall_edge"}, {3, "right_wall"}});
}

Json handle_planted_request(const PlantedGenerator& gen, const Json& request) {
  if (const auto problem = protocol::check_request(request)) {
    const Json id = request.is_object() && request.contains("id") && request.at("id").is_number_integer()
                        ? request.at("id")
                        : Json(nullptr);
    return protocol::error_response(id, "bad_request", *problem);
  }
  const Json& id = request.at("id");
  const auto cmd = request.at("cmd").get<std::string>();
  try {
    if (cmd == "spec") {
      Json concepts = Json::array();
      for (const auto& c : gen.catalog.concepts()) {
        concepts.push_back({{"id", c.id}, {"name", c.name}, {"level", std::string(to_string(c.level))}});
      }
      const auto& s = gen.spec->space;
      return {{"id", id},
              {"dim", s.dim},
              {"num_layers", s.num_layers},
              {"per_layer_dim", s.per_layer_dim},
              {"concepts", std::move(concepts)},
              {"transform",
               {{"weight", to_json(gen.spec->transform.stacked_weight())},
                {"bias", to_json(gen.spec->transform.stacked_bias())}}}};
    }
    if (cmd == "score") {
      const auto codes = protocol::codes_from_request(request);
      for (const auto& c : codes) check_code_shape(gen.handle, c);
      Json scores = Json::array();
      for (const auto& c : codes) {
        Json entry = Json::object();
        for (const auto& f : gen.spec->factors) entry[f.concept_id] = gen.spec->score(f, c);
        scores.push_back(std::move(entry));
      }
      return {{"id", id}, {"scores", std::move(scores)}};
    }
    if (cmd == "generate") {
      const auto codes = protocol::codes_from_request(request);
      for (const auto& c : codes) check_code_shape(gen.handle, c);
      const std::filesystem::path dir = request.value("out_dir", std::string("."));
      std::filesystem::create_directories(dir);
      Json images = Json::array();
      for (std::size_t k = 0; k < codes.size(); ++k) {
        const auto path = dir / ("image_" + id.dump() + "_" + std::to_string(k) + ".png");
        write_png(path, render_planted(*gen.spec, codes[k]));
        images.push_back(path.string());
      }
      return {{"id", id}, {"images", std::move(images)}};
    }
    // segment
    Json masks = Json::array();
    for (const auto& p : request.at("images")) {
      const std::filesystem::path image_path = p.get<std::string>();
      auto mask_path = image_path;
      mask_path.replace_extension(".mask.png");
      write_mask_png(mask_path, segment_planted(read_png(image_path)));
      masks.push_back(mask_path.string());
    }
    return {{"id", id}, {"masks", std::move(masks)}};
  } catch (const std::exception& e) {
    return protocol::error_response(id, "failed", e.what());
  }
}

int serve_planted(std::istream& in, std::ostream& out, const PlantedGenerator& gen, const FaultPlan& faults) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++n;
    if (faults.exit_on == n) return 3;
    if (faults.stall_on == n) {
      for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
    }
    if (faults.garbage_on == n) {
      out << "this is not json" << std::endl;
      continue;
    }
    Json request;
    Json response;
    try {
      request = Json::parse(line);
      response = handle_planted_request(gen, request);
    } catch (const Json::exception& e) {
      response = protocol::error_response(nullptr, "bad_request", std::string("request is not JSON: ") + e.what());
    }
    if (faults.out_of_range_on == n && response.contains("scores") && !response.at("scores").empty()) {
      auto& first = response["scores"][0];
      if (!first.empty()) first.begin().value() = 1.7;
    }
    if (faults.wrong_id_on == n && response.at("id").is_number_integer()) {
      response["id"] = response.at("id").get<std::int64_t>() + 1;
    }
    out << response.dump() << std::endl;
  }
  return 0;
}

}  // namespace hierprobe
