#include "spde/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace spde {

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

} // namespace

EvalSummary evaluate_policy(const PolicyParams& params, const ExperimentConfig& config,
                            int n_trials, std::uint64_t eval_seed) {
    if (n_trials < 2) throw std::invalid_argument("evaluation needs at least 2 trials");
    const Grid g = config.grid();
    if (params.input_points != config.points || params.input_dim != config.dim)
        throw std::invalid_argument("policy/grid shape mismatch");
    const ActuatorMap map = config.actuator_map();
    if (params.outputs != map.count())
        throw std::invalid_argument("policy outputs vs actuator count mismatch");
    const CostSpec cost = config.cost_spec();
    const Field x0 = config.initial_field();
    const PolicyParams zero =
        make_policy(params.arch, params.input_points, params.input_dim, params.outputs);
    const int steps = config.steps();

    const int n = g.node_count();
    Eigen::VectorXd cm = Eigen::VectorXd::Zero(n), cs = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd um = Eigen::VectorXd::Zero(n), us = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ccost(n_trials), ucost(n_trials);
    for (int i = 0; i < n_trials; ++i) {
        Rng rng_c = rollout_rng(eval_seed, i, 0);
        Rng rng_u = rollout_rng(eval_seed, i, 0); // paired seeds
        Trajectory tc = rollout(config.model, map, params, x0, steps, config.dt, rng_c,
                                config.noise_channel);
        Trajectory tu =
            rollout(config.model, map, zero, x0, steps, config.dt, rng_u, config.noise_channel);
        const Eigen::VectorXd& fc = tc.states.back().values;
        const Eigen::VectorXd& fu = tu.states.back().values;
        cm += fc;
        cs += fc.cwiseProduct(fc);
        um += fu;
        us += fu.cwiseProduct(fu);
        ccost[i] = state_cost(tc, cost);
        ucost[i] = state_cost(tu, cost);
    }
    EvalSummary s;
    s.trials = n_trials;
    cm /= n_trials;
    um /= n_trials;
    // sample standard deviation
    s.controlled_std =
        ((cs - n_trials * cm.cwiseProduct(cm)) / (n_trials - 1)).cwiseMax(0.0).cwiseSqrt();
    s.uncontrolled_std =
        ((us - n_trials * um.cwiseProduct(um)) / (n_trials - 1)).cwiseMax(0.0).cwiseSqrt();
    s.controlled_mean = std::move(cm);
    s.uncontrolled_mean = std::move(um);
    s.controlled_cost_mean = ccost.mean();
    s.uncontrolled_cost_mean = ucost.mean();
    s.controlled_cost_std =
        std::sqrt((ccost.array() - s.controlled_cost_mean).square().sum() / (n_trials - 1));
    s.uncontrolled_cost_std =
        std::sqrt((ucost.array() - s.uncontrolled_cost_mean).square().sum() / (n_trials - 1));
    return s;
}

std::string training_csv(const TrainReport& report) {
    std::ostringstream out;
    out << "iteration,loss,mean_state_cost,effective_sample_size,grad_norm,wall_time_s\n";
    for (const auto& r : report.records)
        out << r.iteration << ',' << fmt(r.loss) << ',' << fmt(r.mean_state_cost) << ','
            << fmt(r.effective_sample_size) << ',' << fmt(r.grad_norm) << ','
            << fmt(r.wall_time_s) << '\n';
    return out.str();
}

TrainReport parse_training_csv(const std::string& text) {
    TrainReport report;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("iteration,", 0) != 0)
        throw std::runtime_error("not a training CSV");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        TrainRecord r;
        auto next = [&]() {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("short CSV row");
            return cell;
        };
        r.iteration = std::stoi(next());
        r.loss = std::stod(next());
        r.mean_state_cost = std::stod(next());
        r.effective_sample_size = std::stod(next());
        r.grad_norm = std::stod(next());
        r.wall_time_s = std::stod(next());
        report.records.push_back(r);
    }
    return report;
}

std::string eval_csv(const EvalSummary& s, const Grid& grid) {
    std::ostringstream out;
    out << "# trials=" << s.trials << " controlled_cost_mean=" << fmt(s.controlled_cost_mean)
        << " controlled_cost_std=" << fmt(s.controlled_cost_std)
        << " uncontrolled_cost_mean=" << fmt(s.uncontrolled_cost_mean)
        << " uncontrolled_cost_std=" << fmt(s.uncontrolled_cost_std) << "\n";
    out << "node,x,y,controlled_mean,controlled_std,uncontrolled_mean,uncontrolled_std\n";
    for (int j = 0; j < grid.node_count(); ++j) {
        double x, y;
        if (grid.dim == 1) {
            x = grid.coord(j);
            y = 0;
        } else {
            x = grid.coord(j % grid.points);
            y = grid.coord(j / grid.points);
        }
        out << j << ',' << fmt(x) << ',' << fmt(y) << ',' << fmt(s.controlled_mean[j]) << ','
            << fmt(s.controlled_std[j]) << ',' << fmt(s.uncontrolled_mean[j]) << ','
            << fmt(s.uncontrolled_std[j]) << '\n';
    }
    return out.str();
}

namespace {

struct SvgCanvas {
    std::ostringstream body;
    double width, height;

    SvgCanvas(double w, double h) : width(w), height(h) {}

    std::string finish() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body.str() << "</svg>\n";
        return out.str();
    }
};

std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // blue -> white -> red
    int r, g, b;
    if (t < 0.5) {
        const double s = t / 0.5;
        r = static_cast<int>(255 * s);
        g = static_cast<int>(255 * s);
        b = 255;
    } else {
        const double s = (t - 0.5) / 0.5;
        r = 255;
        g = static_cast<int>(255 * (1 - s));
        b = static_cast<int>(255 * (1 - s));
    }
    std::ostringstream out;
    out << "rgb(" << r << ',' << g << ',' << b << ')';
    return out.str();
}

struct Axis {
    double lo, hi, plot_lo, plot_hi;
    double map(double v) const { return plot_lo + (v - lo) / (hi - lo) * (plot_hi - plot_lo); }
};

void polyline(SvgCanvas& svg, const Axis& xa, const Axis& ya,
              const std::vector<double>& xs, const std::vector<double>& ys,
              const std::string& color, double width = 1.5) {
    svg.body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
             << "\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i)
        svg.body << xa.map(xs[i]) << ',' << ya.map(ys[i]) << ' ';
    svg.body << "\"/>\n";
}

void band(SvgCanvas& svg, const Axis& xa, const Axis& ya, const std::vector<double>& xs,
          const std::vector<double>& lo, const std::vector<double>& hi,
          const std::string& color) {
    svg.body << "<polygon fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) svg.body << xa.map(xs[i]) << ',' << ya.map(hi[i]) << ' ';
    for (size_t i = xs.size(); i-- > 0;) svg.body << xa.map(xs[i]) << ',' << ya.map(lo[i]) << ' ';
    svg.body << "\"/>\n";
}

void heatmap(SvgCanvas& svg, double x0, double y0, double w, double h,
             const Eigen::MatrixXd& values, double vlo, double vhi) {
    const double cw = w / values.cols();
    const double ch = h / values.rows();
    for (int r = 0; r < values.rows(); ++r)
        for (int c = 0; c < values.cols(); ++c) {
            const double t = (values(r, c) - vlo) / (vhi - vlo + 1e-300);
            svg.body << "<rect x=\"" << x0 + c * cw << "\" y=\"" << y0 + (values.rows() - 1 - r) * ch
                     << "\" width=\"" << cw + 0.5 << "\" height=\"" << ch + 0.5 << "\" fill=\""
                     << heat_color(t) << "\"/>\n";
        }
}

} // namespace

std::string terminal_profile_svg(const EvalSummary& s, const ExperimentConfig& config) {
    const Grid g = config.grid();
    SvgCanvas svg(640, 420);

    if (g.dim == 2) {
        // mean controlled terminal field as a contour-style heat map
        Eigen::MatrixXd m(g.points, g.points);
        for (int r = 0; r < g.points; ++r)
            for (int c = 0; c < g.points; ++c) m(r, c) = s.controlled_mean[g.index(r, c)];
        heatmap(svg, 40, 20, 560, 360, m, m.minCoeff(), std::max(m.maxCoeff(), m.minCoeff() + 1e-12));
        return svg.finish();
    }

    std::vector<double> xs(g.points);
    std::vector<double> cm(g.points), clo(g.points), chi(g.points);
    std::vector<double> um(g.points), ulo(g.points), uhi(g.points);
    double ymin = 1e300, ymax = -1e300;
    for (int j = 0; j < g.points; ++j) {
        xs[j] = g.coord(j);
        cm[j] = s.controlled_mean[j];
        clo[j] = cm[j] - 2 * s.controlled_std[j];
        chi[j] = cm[j] + 2 * s.controlled_std[j];
        um[j] = s.uncontrolled_mean[j];
        ulo[j] = um[j] - 2 * s.uncontrolled_std[j];
        uhi[j] = um[j] + 2 * s.uncontrolled_std[j];
        ymin = std::min({ymin, clo[j], ulo[j]});
        ymax = std::max({ymax, chi[j], uhi[j]});
    }
    for (const auto& r : config.regions) {
        ymin = std::min(ymin, r.desired);
        ymax = std::max(ymax, r.desired);
    }
    const double pad = 0.1 * (ymax - ymin + 1e-12);
    Axis xa{0, g.extent, 50, 620};
    Axis ya{ymin - pad, ymax + pad, 400, 20};

    band(svg, xa, ya, xs, ulo, uhi, "blue");
    band(svg, xa, ya, xs, clo, chi, "orange");
    polyline(svg, xa, ya, xs, um, "blue");
    polyline(svg, xa, ya, xs, cm, "orange");
    // desired values in green, actuator centers in red
    for (const auto& r : config.regions) {
        polyline(svg, xa, ya, {r.xlo, r.xhi}, {r.desired, r.desired}, "green", 3.0);
    }
    for (const auto& c : config.centers)
        svg.body << "<line x1=\"" << xa.map(c[0]) << "\" x2=\"" << xa.map(c[0])
                 << "\" y1=\"20\" y2=\"400\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
    svg.body << "<line x1=\"50\" x2=\"620\" y1=\"400\" y2=\"400\" stroke=\"black\"/>\n";
    svg.body << "<line x1=\"50\" x2=\"50\" y1=\"20\" y2=\"400\" stroke=\"black\"/>\n";
    return svg.finish();
}

std::string rollout_contour_svg(const Trajectory& traj, const ExperimentConfig& config) {
    const Grid g = config.grid();
    SvgCanvas svg(640, 420);
    if (g.dim == 1) {
        // space-time contour: rows = space, cols = time
        const int T = static_cast<int>(traj.states.size());
        Eigen::MatrixXd m(g.points, T);
        for (int t = 0; t < T; ++t) m.col(t) = traj.states[t].values;
        heatmap(svg, 40, 20, 560, 360, m, m.minCoeff(),
                std::max(m.maxCoeff(), m.minCoeff() + 1e-12));
    } else {
        Eigen::MatrixXd m(g.points, g.points);
        const Eigen::VectorXd& v = traj.states.back().values;
        for (int r = 0; r < g.points; ++r)
            for (int c = 0; c < g.points; ++c) m(r, c) = v[g.index(r, c)];
        heatmap(svg, 40, 20, 560, 360, m, m.minCoeff(),
                std::max(m.maxCoeff(), m.minCoeff() + 1e-12));
    }
    return svg.finish();
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                                int eval_trials, bool quiet) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_file(out_dir + "/config.cfg", dump_config(config));

    const ActuatorMap map = config.actuator_map();
    const CostSpec cost = config.cost_spec();
    const Field x0 = config.initial_field();
    PolicyParams params = config.initial_policy();

    TrainOptions opts = config.train_options();
    opts.on_iteration = [&](int k, const PolicyParams& p, const TrainRecord& rec) {
        if (config.checkpoint_interval > 0 &&
            (k % config.checkpoint_interval == 0 || k == config.iterations))
            save_checkpoint(p, out_dir + "/checkpoint_" + std::to_string(k) + ".bin");
        if (!quiet && (k % 50 == 0 || k == 1))
            std::cerr << "iter " << k << " loss " << rec.loss << " cost "
                      << rec.mean_state_cost << " ess " << rec.effective_sample_size << "\n";
    };

    TrainResult result = train(config.model, map, cost, x0, std::move(params), opts);
    write_file(out_dir + "/training.csv", training_csv(result.report));
    save_checkpoint(result.params, out_dir + "/checkpoint_final.bin");
    if (result.report.aborted)
        throw std::runtime_error("training aborted: " + result.report.abort_reason +
                                 " (partial artifacts in " + out_dir + ")");

    EvalSummary summary = evaluate_policy(result.params, config, eval_trials);
    write_file(out_dir + "/eval.csv", eval_csv(summary, config.grid()));
    write_file(out_dir + "/terminal_profile.svg", terminal_profile_svg(summary, config));

    Rng rng = rollout_rng(config.seed ^ 0xC0FFEEull, 0, 0);
    Trajectory sample = rollout(config.model, map, result.params, x0, config.steps(),
                                config.dt, rng, config.noise_channel);
    write_file(out_dir + "/rollout_contour.svg", rollout_contour_svg(sample, config));

    return ExperimentResult{std::move(result.params), std::move(result.report),
                            std::move(summary)};
}

} // namespace spde
