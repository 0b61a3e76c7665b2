// Command-line front end: simulate telemetry, reconstruct shapes, run the
// Monte Carlo uncertainty analysis, detect heat and humidity events,
// evaluate against ground truth and write plot-ready layers.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "everbot/everbot.hpp"

namespace {

using namespace everbot;

struct Selector {
  std::optional<std::uint64_t> tick;
  std::optional<double> time_s;
};

RobotGeometry resolve_geometry(const std::string& flag, const TelemetryLog* log) {
  if (!flag.empty()) return io::parse_geometry(flag);
  if (log && log->meta.geometry) return *log->meta.geometry;
  std::cerr << "warning: no geometry given, using D=0.066 L=0.076 N=15\n";
  return RobotGeometry(0.066, 0.076, 15);
}

std::uint64_t resolve_tick(const TelemetryLog& log, const Selector& sel) {
  if (sel.tick) return *sel.tick;
  if (sel.time_s) {
    auto t = log.tick_at_time(*sel.time_s);
    if (!t) throw Error(ErrorCode::TimeOutOfRange, "no tick at or after t=" + std::to_string(*sel.time_s));
    return *t;
  }
  const auto ticks = log.ticks();
  if (ticks.empty()) throw Error(ErrorCode::EmptyInput, "log has no records");
  return ticks.back();
}

ShapeEstimate shape_at(const TelemetryLog& log, const RobotGeometry& geom, std::uint64_t tick) {
  const auto orientations = log.orientations_at(tick, geom.band_count);
  return reconstruct_shape(orientations, geom);
}

void add_selector(CLI::App* cmd, Selector& sel) {
  auto* tick = cmd->add_option("--tick", sel.tick, "Tick to analyse (default: last tick)");
  cmd->add_option("--time", sel.time_s, "Analyse the first tick at or after this time (s)")->excludes(tick);
}

Vec3 plane_normal_or_throw(const std::string& plane) {
  if (plane == "xy") return Vec3::UnitZ();
  throw Error(ErrorCode::InvalidArgument, "unknown plane '" + plane + "'");
}

// export-plot layers ---------------------------------------------------------

Vec3 flatten(const Vec3& p, bool planar) { return planar ? Vec3(p.x(), p.y(), 0.0) : p; }

void write_points_layer(const std::string& path, const std::string& layer,
                        const std::vector<io::ShapePoint>& pts, bool planar) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << "# everbot-plot v1\n# layer: " << layer << "\nkind,index,x,y,z\n";
  for (const auto& p : pts) {
    out << (p.kind == PointKind::Band ? "band" : "kink") << "," << p.index << ","
        << io::format_vec(flatten(p.position, planar)) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape reconstruction and distributed sensing for everting robots"};
  app.set_config("--config", "", "Read flags from an INI/TOML file; command-line flags win");
  app.require_subcommand(1);

  // simulate
  std::string scenario_path, log_out, truth_out;
  std::optional<std::uint64_t> truth_tick;
  bool realtime = false;
  auto* simulate = app.add_subcommand("simulate", "Run a bus scenario and write a telemetry log");
  simulate->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  simulate->add_option("--out", log_out, "Telemetry log to write")->required();
  simulate->add_option("--truth-out", truth_out, "Also write the true band positions as ground truth");
  simulate->add_option("--truth-tick", truth_tick, "Tick for --truth-out (default: last tick)");
  simulate->add_flag("--realtime", realtime, "Pace tick progress output at the scenario rate");

  // shared analysis options
  std::string log_path, geometry, out_path;
  Selector sel;

  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct the shape at one tick");
  reconstruct->add_option("--log", log_path, "Telemetry log")->required();
  reconstruct->add_option("--out", out_path, "Shape export to write")->required();
  reconstruct->add_option("--geometry", geometry, "Override geometry as D,L,N (meters, count)");
  add_selector(reconstruct, sel);

  McConfig mc;
  double angle_err_deg = 3.0;
  bool fixed_location = false;
  std::size_t export_samples = 0;
  auto* uncertainty = app.add_subcommand("uncertainty", "Monte Carlo shape cloud at one tick");
  uncertainty->add_option("--log", log_path, "Telemetry log")->required();
  uncertainty->add_option("--out", out_path, "Cloud export to write")->required();
  uncertainty->add_option("--geometry", geometry, "Override geometry as D,L,N (meters, count)");
  uncertainty->add_option("--seed", mc.seed, "Random seed");
  uncertainty->add_option("--samples", mc.n_samples, "Number of sampled shapes")->check(CLI::PositiveNumber);
  uncertainty->add_option("--angle-err-deg", angle_err_deg, "Uniform bend-angle error bound (deg)")
      ->check(CLI::Range(0.0, 29.999));
  uncertainty->add_option("--percentile", mc.percentile, "Percentile for the summary radius")
      ->check(CLI::Range(1e-12, 1.0));
  uncertainty->add_option("--threads", mc.threads, "Worker threads (0: all cores)");
  uncertainty->add_flag("--fixed-location", fixed_location, "Keep kinks at segment midpoints");
  uncertainty->add_option("--export-samples", export_samples, "Write at most this many samples (0: all)");
  add_selector(uncertainty, sel);

  double threshold = 1.0, humidity_threshold = 5.0, window_s = 1.0;
  auto* events = app.add_subcommand("events", "Detect heat-source and humidity events");
  events->add_option("--log", log_path, "Telemetry log")->required();
  events->add_option("--out", out_path, "Event report to write (default: standard output)");
  events->add_option("--geometry", geometry, "Override geometry as D,L,N (meters, count)");
  events->add_option("--threshold", threshold, "Thermistor rise needed for a heat event");
  events->add_option("--humidity-threshold", humidity_threshold, "Humidity rise needed (%RH)");
  events->add_option("--window", window_s, "Baseline window (s)");
  std::vector<double> steinhart;
  events->add_option("--steinhart", steinhart, "A,B,C coefficients for logs recorded in ohm")
      ->delimiter(',')
      ->expected(3);
  add_selector(events, sel);

  std::string shape_path, truth_path, plane = "xy";
  auto* evaluate = app.add_subcommand("evaluate", "Position errors against ground truth");
  evaluate->add_option("--shape", shape_path, "Shape export")->required();
  evaluate->add_option("--truth", truth_path, "Ground-truth file")->required();
  evaluate->add_option("--plane", plane, "xy: project and register in the plane; none: 3D")
      ->check(CLI::IsMember({"xy", "none"}));
  evaluate->add_option("--out", out_path, "Error report to write");

  std::string cloud_path, prefix;
  std::size_t max_samples = 100;
  auto* export_plot = app.add_subcommand("export-plot", "Write layered plot files");
  export_plot->add_option("--shape", shape_path, "Nominal shape export")->required();
  export_plot->add_option("--cloud", cloud_path, "Cloud export");
  export_plot->add_option("--truth", truth_path, "Ground-truth file");
  export_plot->add_option("--out-prefix", prefix, "Prefix for the layer files")->required();
  export_plot->add_option("--max-samples", max_samples, "Cloud samples to keep");
  export_plot->add_option("--plane", plane, "xy flattens every layer onto the x-y plane")
      ->check(CLI::IsMember({"xy", "none"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const Scenario sc = io::read_scenario(scenario_path);
      const TelemetryLog log = run_scenario(sc);
      io::write_log(log_out, log);
      std::size_t missing = 0;
      for (const auto& r : log.records) missing += !r.reading;
      if (realtime) {
        for (std::uint64_t t = 0; t < sc.tick_count(); ++t) {
          std::cerr << "tick " << t << "\r" << std::flush;
          std::this_thread::sleep_for(std::chrono::duration<double>(1.0 / sc.tick_hz));
        }
        std::cerr << "\n";
      }
      if (!truth_out.empty()) {
        const std::uint64_t tick = truth_tick.value_or(sc.tick_count() - 1);
        if (tick >= sc.tick_count()) throw Error(ErrorCode::InvalidArgument, "--truth-tick beyond the run");
        GroundTruthShape gt;
        gt.dimension = 3;
        gt.frame_note = "simulated truth at tick " + std::to_string(tick);
        const double t = sc.start_s() + static_cast<double>(tick) / sc.tick_hz;
        for (std::size_t b = 0; b < sc.geometry.band_count; ++b) gt.band_points.push_back(true_pose(sc, t, b).position);
        io::write_ground_truth(truth_out, gt);
      }
      std::cout << sc.tick_count() << " ticks, " << log.records.size() << " records, " << missing
                << " missing, " << sc.failure_schedule.size() << " failure events\n";
      return 0;
    }

    if (*reconstruct) {
      const TelemetryLog log = io::read_log(log_path);
      const RobotGeometry geom = resolve_geometry(geometry, &log);
      const std::uint64_t tick = resolve_tick(log, sel);
      const ShapeEstimate shape = shape_at(log, geom, tick);
      io::write_shape(out_path, io::ShapeExport::from_shape(shape));
      if (!geom.single_bend_valid()) std::cerr << "warning: band spacing below 1.5 diameters\n";
      std::cout << "tick " << tick << ": max bend angle " << io::format_double(rad_to_deg(shape.max_bend_angle()))
                << " deg\n";
      return 0;
    }

    if (*uncertainty) {
      const TelemetryLog log = io::read_log(log_path);
      const RobotGeometry geom = resolve_geometry(geometry, &log);
      const std::uint64_t tick = resolve_tick(log, sel);
      mc.angle_error_bound_rad = deg_to_rad(angle_err_deg);
      mc.vary_bend_location = !fixed_location;
      const auto orientations = log.orientations_at(tick, geom.band_count);
      const ShapeCloud cloud = sample_shapes(orientations, geom, mc);
      const std::size_t keep = export_samples == 0 ? cloud.samples.size() : export_samples;
      io::write_cloud(out_path, io::CloudExport::from_cloud(cloud, keep));
      const BandStats& tip = cloud.per_band_stats.back();
      std::cout << cloud.samples.size() << " samples, tip max radius " << io::format_double(tip.max_radius_m)
                << " m, tip p" << io::format_double(100.0 * mc.percentile) << " radius "
                << io::format_double(tip.percentile_radius_m) << " m, " << cloud.clamped_bends
                << " clamped bends\n";
      return 0;
    }

    if (*events) {
      TelemetryLog log = io::read_log(log_path);
      if (log.meta.thermistor_unit == "ohm" && steinhart.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "log records thermistors in ohm; pass --steinhart A,B,C");
      }
      if (steinhart.size() == 3) {
        log = io::thermistors_to_celsius(std::move(log), SteinhartHart{steinhart[0], steinhart[1], steinhart[2]});
      }
      log = io::thermistors_to_celsius(std::move(log), SteinhartHart{});  // rejects unknown units
      const RobotGeometry geom = resolve_geometry(geometry, &log);
      const std::uint64_t tick = resolve_tick(log, sel);
      const ShapeEstimate shape = shape_at(log, geom, tick);
      const auto grid = log.thermistor_grid(geom.band_count);
      HeatDetectionOptions opts;
      opts.baseline_window_s = window_s;
      opts.poll_period_s = 1.0 / log.meta.tick_hz;
      io::EventReport report;
      report.heat = detect_heat_events(grid, ThermistorLayout::top_half(kThermistorsPerBand), shape, threshold, opts);
      for (std::size_t b = 0; b < geom.band_count; ++b) {
        for (const auto& rise : detect_humidity_rise(log.humidity_series(b), humidity_threshold, window_s)) {
          report.humidity.emplace_back(b, rise);
        }
      }
      if (out_path.empty()) io::write_events(std::cout, report);
      else io::write_events(out_path, report);
      std::cerr << report.heat.size() << " heat events, " << report.humidity.size() << " humidity rises\n";
      return 0;
    }

    if (*evaluate) {
      const io::ShapeExport shape = io::read_shape(shape_path);
      const GroundTruthShape truth = io::read_ground_truth(truth_path);
      const Polyline3 est = shape.band_positions();
      ErrorReport report;
      if (plane == "none") {
        report = position_errors(std::span<const Vec3>(est), std::span<const Vec3>(truth.band_points));
      } else {
        const Vec3 n = plane_normal_or_throw(plane);
        const Polyline2 e2 = project_to_plane(est, n);
        const Polyline2 t2 = project_to_plane(truth.band_points, n);
        report = position_errors(std::span<const Vec2>(e2), std::span<const Vec2>(t2));
      }
      for (std::size_t b = 0; b < report.per_band_error_m.size(); ++b) {
        std::cout << "band " << b << ": " << io::format_double(report.per_band_error_m[b]) << " m\n";
      }
      std::cout << "max error " << io::format_double(report.max_error_m) << " m at band " << report.argmax_band
                << "\n";
      if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot open '" + out_path + "' for writing");
        io::write_error_report(out, report);
      }
      return 0;
    }

    if (*export_plot) {
      const bool planar = plane == "xy";
      const io::ShapeExport shape = io::read_shape(shape_path);
      write_points_layer(prefix + "_nominal.csv", "nominal", shape.points, planar);
      if (!cloud_path.empty()) {
        const io::CloudExport cloud = io::read_cloud(cloud_path);
        std::ofstream out(prefix + "_cloud.csv", std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot open '" + prefix + "_cloud.csv' for writing");
        out << "# everbot-plot v1\n# layer: cloud\nsample,kind,index,x,y,z\n";
        const std::size_t n = cloud.samples.size();
        const std::size_t keep = std::min(n, max_samples);
        for (std::size_t j = 0; j < keep; ++j) {
          const std::size_t i = j * n / keep;
          for (const auto& p : cloud.samples[i]) {
            out << i << "," << (p.kind == PointKind::Band ? "band" : "kink") << "," << p.index << ","
                << io::format_vec(flatten(p.position, planar)) << "\n";
          }
        }
        std::ofstream stats(prefix + "_stats.csv", std::ios::binary | std::ios::trunc);
        if (!stats) throw Error(ErrorCode::IoError, "cannot open '" + prefix + "_stats.csv' for writing");
        stats << "# everbot-plot v1\n# layer: stats\n# percentile: " << io::format_double(cloud.percentile)
              << "\nband,x,y,z,max_radius_m,percentile_radius_m\n";
        for (std::size_t b = 0; b < cloud.stats.size(); ++b) {
          const BandStats& s = cloud.stats[b];
          stats << b << "," << io::format_vec(flatten(s.mean_position, planar)) << ","
                << io::format_double(s.max_radius_m) << "," << io::format_double(s.percentile_radius_m) << "\n";
        }
      }
      if (!truth_path.empty()) {
        const GroundTruthShape truth = io::read_ground_truth(truth_path);
        std::vector<io::ShapePoint> pts;
        for (std::size_t b = 0; b < truth.band_points.size(); ++b) {
          pts.push_back({PointKind::Band, b, truth.band_points[b], std::nullopt});
          if (truth.midpoints && b < truth.midpoints->size()) {
            pts.push_back({PointKind::Kink, b, (*truth.midpoints)[b], std::nullopt});
          }
        }
        write_points_layer(prefix + "_truth.csv", "truth", pts, planar);
      }
      std::cout << "wrote layers with prefix " << prefix << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
