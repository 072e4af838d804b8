#include "spde/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace spde {

int ExperimentConfig::steps() const {
    return static_cast<int>(std::llround(horizon / dt));
}

void ExperimentConfig::validate() const {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };
    check(dim == 1 || dim == 2, "grid dim must be 1 or 2");
    check(points >= 3, "grid needs at least 3 points");
    check(extent > 0, "grid extent must be positive");
    check(model.epsilon > 0, "epsilon must be positive");
    check(model.rho > 0, "rho must be positive");
    check(dt > 0, "dt must be positive");
    check(horizon > 0, "horizon must be positive");
    if (dt > 0 && horizon > 0) {
        const double n = horizon / dt;
        check(std::abs(n - std::llround(n)) * dt <= 1e-9 * std::max(1.0, horizon),
              "horizon must be an integral number of steps");
    }
    check(iterations >= 1, "need at least one iteration");
    check(rollouts >= 1, "need at least one rollout");
    check(learn_rate > 0, "learn rate must be positive");
    check(proximal_steps >= 0, "proximal steps must be non-negative");
    check(kappa > 0, "kappa must be positive");
    if (actuation == ActuatorKind::GaussianDistributed) {
        check(!centers.empty(), "distributed actuation needs centers");
        check(actuator_sigma2 > 0, "actuator variance must be positive");
        for (const auto& c : centers) {
            check(static_cast<int>(c.size()) == dim, "actuator center dimension mismatch");
            for (double v : c) check(v >= 0 && v <= extent, "actuator center outside domain");
        }
    } else {
        check(dim == 1, "boundary actuation is 1D only");
    }
    check(!regions.empty(), "cost needs at least one region");
    for (const auto& r : regions) {
        check(r.xlo <= r.xhi && r.xlo >= 0 && r.xhi <= extent, "cost region x out of bounds");
        if (dim == 2)
            check(r.ylo <= r.yhi && r.ylo >= 0 && r.yhi <= extent,
                  "cost region y out of bounds");
    }
    check(model.kind == SpdeKind::Nagumo1dNeumann || model.alpha == 0,
          "alpha only applies to the Nagumo model");
    if (model.kind == SpdeKind::Heat2dDirichlet) check(dim == 2, "2D heat needs a 2D grid");
    if (model.kind != SpdeKind::Heat2dDirichlet) check(dim == 1, "this model needs a 1D grid");
    if (arch == Arch::Cnn) check(dim == 2, "CNN policy needs a 2D grid");
    if (arch == Arch::Mlp) check(dim == 1, "MLP policy needs a 1D grid");
    if (model.kind == SpdeKind::Heat1dBoundary)
        check(actuation == ActuatorKind::BoundaryIndicator,
              "boundary model needs boundary actuation");
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw std::invalid_argument(msg);
    }
}

ActuatorMap ExperimentConfig::actuator_map() const {
    const Grid g = grid();
    return actuation == ActuatorKind::BoundaryIndicator
               ? boundary_actuator_map(g)
               : gaussian_actuator_map(g, centers, actuator_sigma2);
}

CostSpec ExperimentConfig::cost_spec() const {
    const Grid g = grid();
    CostSpec spec;
    spec.kappa = kappa;
    for (const auto& r : regions) {
        CostRegion region;
        region.desired = r.desired;
        const double slack = 1e-12 * std::max(1.0, extent);
        if (dim == 1) {
            for (int j = 0; j < g.points; ++j) {
                const double x = g.coord(j);
                if (x >= r.xlo - slack && x <= r.xhi + slack) region.nodes.push_back(j);
            }
            if (region.nodes.empty()) {
                // nearest node to the region center
                const double cx = 0.5 * (r.xlo + r.xhi);
                int best = 0;
                for (int j = 1; j < g.points; ++j)
                    if (std::abs(g.coord(j) - cx) < std::abs(g.coord(best) - cx)) best = j;
                region.nodes.push_back(best);
            }
        } else {
            for (int row = 0; row < g.points; ++row)
                for (int col = 0; col < g.points; ++col) {
                    const double x = g.coord(col), y = g.coord(row);
                    if (x >= r.xlo - slack && x <= r.xhi + slack && y >= r.ylo - slack &&
                        y <= r.yhi + slack)
                        region.nodes.push_back(g.index(row, col));
                }
            if (region.nodes.empty()) {
                const double cx = 0.5 * (r.xlo + r.xhi), cy = 0.5 * (r.ylo + r.yhi);
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (int row = 0; row < g.points; ++row)
                    for (int col = 0; col < g.points; ++col) {
                        const double dx = g.coord(col) - cx, dy = g.coord(row) - cy;
                        const double d = dx * dx + dy * dy;
                        if (d < best_d) {
                            best_d = d;
                            best = g.index(row, col);
                        }
                    }
                region.nodes.push_back(best);
            }
        }
        spec.regions.push_back(std::move(region));
    }
    return spec;
}

Field ExperimentConfig::initial_field() const {
    const Grid g = grid();
    Field f = make_field(g);
    switch (initial_condition) {
        case InitialCondition::Zero:
            if (model.kind == SpdeKind::Burgers1dDirichlet ||
                model.kind == SpdeKind::Heat1dDirichlet) {
                f.values[0] = model.bc_left;
                f.values[g.points - 1] = model.bc_right;
            }
            break;
        case InitialCondition::NagumoSigmoid:
            for (int j = 0; j < g.points; ++j)
                f.values[j] = 1.0 / (1.0 + std::exp(-(2.0 - g.coord(j)) / std::sqrt(2.0)));
            break;
    }
    return f;
}

PolicyParams ExperimentConfig::initial_policy() const {
    const int outputs = actuation == ActuatorKind::BoundaryIndicator
                            ? 2
                            : static_cast<int>(centers.size());
    std::mt19937_64 rng(seed);
    return init_params(arch, points, dim, outputs, rng, InitScheme::FanIn, init_scale);
}

TrainOptions ExperimentConfig::train_options() const {
    TrainOptions o;
    o.iterations = iterations;
    o.rollouts = rollouts;
    o.steps = steps();
    o.dt = dt;
    o.learn_rate = learn_rate;
    o.beta1 = beta1;
    o.beta2 = beta2;
    o.adam_eps = adam_eps;
    o.mode = gradient_mode;
    o.proximal_steps = proximal_steps;
    o.channel = noise_channel;
    o.seed = seed;
    return o;
}

namespace {

struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<ConfigEntry> tokenize(const std::string& text) {
    std::vector<ConfigEntry> entries;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        entries.push_back(
            {section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
    }
    return entries;
}

double parse_double(const ConfigEntry& e) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(e.value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != e.value.size() || e.value.empty())
        throw std::invalid_argument("config line " + std::to_string(e.line) +
                                    ": bad number '" + e.value + "'");
    return v;
}

long parse_int(const ConfigEntry& e) {
    const double v = parse_double(e);
    if (v != std::floor(v))
        throw std::invalid_argument("config line " + std::to_string(e.line) +
                                    ": expected an integer");
    return static_cast<long>(v);
}

std::vector<double> parse_list(const ConfigEntry& e) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(e.value);
    while (std::getline(in, item, ',')) {
        ConfigEntry sub{e.section, e.key, trim(item), e.line};
        out.push_back(parse_double(sub));
    }
    return out;
}

void apply_entry(ExperimentConfig& c, const ConfigEntry& e, bool& centers_reset,
                 bool& regions_reset) {
    auto fail = [&]() {
        throw std::invalid_argument("config line " + std::to_string(e.line) +
                                    ": unknown key '" + e.section + "." + e.key + "'");
    };
    try {
        if (e.section == "experiment") {
            if (e.key == "name") c.name = e.value;
            else if (e.key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(e));
            else if (e.key == "checkpoint_interval")
                c.checkpoint_interval = static_cast<int>(parse_int(e));
            else fail();
        } else if (e.section == "model") {
            if (e.key == "kind") c.model.kind = spde_kind_from_string(e.value);
            else if (e.key == "epsilon") c.model.epsilon = parse_double(e);
            else if (e.key == "alpha") c.model.alpha = parse_double(e);
            else if (e.key == "rho") c.model.rho = parse_double(e);
            else if (e.key == "sigma")
                c.model.sigma = e.value == "default" ? -1.0 : parse_double(e);
            else if (e.key == "bc_left") c.model.bc_left = parse_double(e);
            else if (e.key == "bc_right") c.model.bc_right = parse_double(e);
            else if (e.key == "initial_condition") {
                if (e.value == "zero") c.initial_condition = ExperimentConfig::InitialCondition::Zero;
                else if (e.value == "nagumo-sigmoid")
                    c.initial_condition = ExperimentConfig::InitialCondition::NagumoSigmoid;
                else
                    throw std::invalid_argument("config line " + std::to_string(e.line) +
                                                ": unknown initial condition");
            } else fail();
        } else if (e.section == "grid") {
            if (e.key == "dim") c.dim = static_cast<int>(parse_int(e));
            else if (e.key == "extent") c.extent = parse_double(e);
            else if (e.key == "points") c.points = static_cast<int>(parse_int(e));
            else fail();
        } else if (e.section == "actuation") {
            if (e.key == "kind") {
                if (e.value == "gaussian") c.actuation = ActuatorKind::GaussianDistributed;
                else if (e.value == "boundary") c.actuation = ActuatorKind::BoundaryIndicator;
                else
                    throw std::invalid_argument("config line " + std::to_string(e.line) +
                                                ": unknown actuation kind");
            } else if (e.key == "center") {
                if (!centers_reset) {
                    c.centers.clear();
                    centers_reset = true;
                }
                c.centers.push_back(parse_list(e));
            } else if (e.key == "sigma2") c.actuator_sigma2 = parse_double(e);
            else fail();
        } else if (e.section == "cost") {
            if (e.key == "kappa") c.kappa = parse_double(e);
            else if (e.key == "region") {
                if (!regions_reset) {
                    c.regions.clear();
                    regions_reset = true;
                }
                const auto v = parse_list(e);
                RegionSpec r;
                if (v.size() == 3) {
                    r.xlo = v[0]; r.xhi = v[1]; r.desired = v[2];
                } else if (v.size() == 5) {
                    r.xlo = v[0]; r.xhi = v[1]; r.ylo = v[2]; r.yhi = v[3]; r.desired = v[4];
                } else
                    throw std::invalid_argument("config line " + std::to_string(e.line) +
                                                ": region needs 3 (1D) or 5 (2D) values");
                c.regions.push_back(r);
            } else fail();
        } else if (e.section == "time") {
            if (e.key == "horizon") c.horizon = parse_double(e);
            else if (e.key == "dt") c.dt = parse_double(e);
            else fail();
        } else if (e.section == "training") {
            if (e.key == "iterations") c.iterations = static_cast<int>(parse_int(e));
            else if (e.key == "rollouts") c.rollouts = static_cast<int>(parse_int(e));
            else if (e.key == "learn_rate") c.learn_rate = parse_double(e);
            else if (e.key == "beta1") c.beta1 = parse_double(e);
            else if (e.key == "beta2") c.beta2 = parse_double(e);
            else if (e.key == "adam_eps") c.adam_eps = parse_double(e);
            else if (e.key == "proximal_steps")
                c.proximal_steps = static_cast<int>(parse_int(e));
            else if (e.key == "gradient_mode") {
                if (e.value == "full-graph") c.gradient_mode = GradientMode::FullGraph;
                else if (e.value == "detached-weights")
                    c.gradient_mode = GradientMode::DetachedWeights;
                else
                    throw std::invalid_argument("config line " + std::to_string(e.line) +
                                                ": unknown gradient mode");
            } else if (e.key == "noise_channel") {
                if (e.value == "field") c.noise_channel = NoiseChannel::Field;
                else if (e.value == "actuation") c.noise_channel = NoiseChannel::Actuation;
                else
                    throw std::invalid_argument("config line " + std::to_string(e.line) +
                                                ": unknown noise channel");
            } else fail();
        } else if (e.section == "policy") {
            if (e.key == "arch") c.arch = arch_from_string(e.value);
            else if (e.key == "init_scale") c.init_scale = parse_double(e);
            else fail();
        } else {
            fail();
        }
    } catch (const std::invalid_argument&) {
        throw;
    }
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    const auto entries = tokenize(text);
    ExperimentConfig config;
    size_t start = 0;
    // a leading `preset = name` expands before overrides apply
    if (!entries.empty() && entries[0].section == "experiment" && entries[0].key == "preset") {
        config = preset(entries[0].value);
        start = 1;
    } else if (!entries.empty() && entries[0].section.empty() && entries[0].key == "preset") {
        config = preset(entries[0].value);
        start = 1;
    }
    bool centers_reset = false, regions_reset = false;
    for (size_t i = start; i < entries.size(); ++i)
        apply_entry(config, entries[i], centers_reset, regions_reset);
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

namespace {

std::string format_number(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

std::string dump_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = " << c.name << "\n";
    out << "seed = " << c.seed << "\n";
    out << "checkpoint_interval = " << c.checkpoint_interval << "\n";
    out << "\n[model]\n";
    out << "kind = " << to_string(c.model.kind) << "\n";
    out << "epsilon = " << format_number(c.model.epsilon) << "\n";
    if (c.model.kind == SpdeKind::Nagumo1dNeumann)
        out << "alpha = " << format_number(c.model.alpha) << "\n";
    out << "rho = " << format_number(c.model.rho) << "\n";
    out << "sigma = " << (c.model.sigma < 0 ? "default" : format_number(c.model.sigma)) << "\n";
    out << "bc_left = " << format_number(c.model.bc_left) << "\n";
    out << "bc_right = " << format_number(c.model.bc_right) << "\n";
    out << "initial_condition = "
        << (c.initial_condition == ExperimentConfig::InitialCondition::Zero ? "zero"
                                                                            : "nagumo-sigmoid")
        << "\n";
    out << "\n[grid]\n";
    out << "dim = " << c.dim << "\n";
    out << "extent = " << format_number(c.extent) << "\n";
    out << "points = " << c.points << "\n";
    out << "\n[actuation]\n";
    out << "kind = "
        << (c.actuation == ActuatorKind::GaussianDistributed ? "gaussian" : "boundary") << "\n";
    for (const auto& center : c.centers) {
        out << "center = ";
        for (size_t i = 0; i < center.size(); ++i)
            out << (i ? ", " : "") << format_number(center[i]);
        out << "\n";
    }
    if (c.actuation == ActuatorKind::GaussianDistributed)
        out << "sigma2 = " << format_number(c.actuator_sigma2) << "\n";
    out << "\n[cost]\n";
    out << "kappa = " << format_number(c.kappa) << "\n";
    for (const auto& r : c.regions) {
        out << "region = " << format_number(r.xlo) << ", " << format_number(r.xhi);
        if (c.dim == 2) out << ", " << format_number(r.ylo) << ", " << format_number(r.yhi);
        out << ", " << format_number(r.desired) << "\n";
    }
    out << "\n[time]\n";
    out << "horizon = " << format_number(c.horizon) << "\n";
    out << "dt = " << format_number(c.dt) << "\n";
    out << "\n[training]\n";
    out << "iterations = " << c.iterations << "\n";
    out << "rollouts = " << c.rollouts << "\n";
    out << "learn_rate = " << format_number(c.learn_rate) << "\n";
    out << "beta1 = " << format_number(c.beta1) << "\n";
    out << "beta2 = " << format_number(c.beta2) << "\n";
    out << "adam_eps = " << format_number(c.adam_eps) << "\n";
    out << "proximal_steps = " << c.proximal_steps << "\n";
    out << "gradient_mode = "
        << (c.gradient_mode == GradientMode::FullGraph ? "full-graph" : "detached-weights")
        << "\n";
    out << "noise_channel = "
        << (c.noise_channel == NoiseChannel::Field ? "field" : "actuation") << "\n";
    out << "\n[policy]\n";
    out << "arch = " << to_string(c.arch) << "\n";
    out << "init_scale = " << format_number(c.init_scale) << "\n";
    return out.str();
}

namespace {

ExperimentConfig build_heat_1d() {
    ExperimentConfig c;
    c.name = "heat-1d";
    c.model.kind = SpdeKind::Heat1dDirichlet;
    c.model.epsilon = 1.0;
    c.model.rho = 10.0;
    c.dim = 1;
    c.extent = 1.0;
    c.points = 64;
    c.centers = {{0.2}, {0.35}, {0.5}, {0.65}, {0.8}};
    c.actuator_sigma2 = 0.01;
    c.kappa = 100.0;
    c.regions = {{0.18, 0.22, 0, 0, 1.0}, {0.48, 0.52, 0, 0, 0.5}, {0.78, 0.82, 0, 0, 1.0}};
    c.horizon = 1.0;
    c.dt = 0.01;
    c.iterations = 1000;
    c.rollouts = 50;
    c.learn_rate = 1e-2;
    c.proximal_steps = 10;
    c.arch = Arch::Mlp;
    return c;
}

ExperimentConfig build_burgers_1d() {
    ExperimentConfig c;
    c.name = "burgers-1d";
    c.model.kind = SpdeKind::Burgers1dDirichlet;
    c.model.epsilon = 0.1;
    c.model.rho = 10.0;
    c.model.bc_left = 1.0;
    c.model.bc_right = 1.0;
    c.dim = 1;
    c.extent = 1.0;
    c.points = 64;
    c.centers = {{0.2}, {0.3}, {0.5}, {0.7}, {0.8}};
    c.actuator_sigma2 = 0.01;
    c.kappa = 100.0;
    c.regions = {{0.18, 0.22, 0, 0, 2.0}, {0.48, 0.52, 0, 0, 1.0}, {0.78, 0.82, 0, 0, 2.0}};
    c.horizon = 1.0;
    c.dt = 0.01;
    c.iterations = 1000;
    c.rollouts = 100;
    c.learn_rate = 1e-2;
    c.proximal_steps = 10;
    c.arch = Arch::Mlp;
    return c;
}

ExperimentConfig build_nagumo_1d() {
    ExperimentConfig c;
    c.name = "nagumo-1d";
    c.model.kind = SpdeKind::Nagumo1dNeumann;
    c.model.epsilon = 1.0;
    c.model.alpha = -0.5;
    c.model.rho = 10.0;
    c.dim = 1;
    c.extent = 5.0;
    c.points = 64;
    c.centers = {{3.5}, {4.0}, {4.5}};
    c.actuator_sigma2 = 0.25;
    c.kappa = 0.1;
    c.regions = {{3.5, 4.95, 0, 0, 0.0}};
    c.horizon = 3.5;
    c.dt = 0.01;
    c.iterations = 1000;
    c.rollouts = 50;
    c.learn_rate = 1e-2;
    c.proximal_steps = 10;
    c.arch = Arch::Mlp;
    c.initial_condition = ExperimentConfig::InitialCondition::NagumoSigmoid;
    return c;
}

ExperimentConfig build_heat_2d() {
    ExperimentConfig c;
    c.name = "heat-2d";
    c.model.kind = SpdeKind::Heat2dDirichlet;
    c.model.epsilon = 1.0;
    c.model.rho = 10.0;
    c.dim = 2;
    c.extent = 0.25;
    c.points = 32;
    const double a = 0.25;
    c.centers = {{0.2 * a, 0.5 * a},
                 {0.5 * a, 0.2 * a},
                 {0.5 * a, 0.5 * a},
                 {0.5 * a, 0.8 * a},
                 {0.8 * a, 0.5 * a}};
    c.actuator_sigma2 = 0.025 * 0.025;
    c.kappa = 100.0;
    c.regions = {
        {0.48 * a, 0.52 * a, 0.48 * a, 0.52 * a, 0.5},
        {0.18 * a, 0.22 * a, 0.48 * a, 0.52 * a, 1.0},
        {0.78 * a, 0.82 * a, 0.48 * a, 0.52 * a, 1.0},
        {0.48 * a, 0.52 * a, 0.18 * a, 0.22 * a, 1.0},
        {0.48 * a, 0.52 * a, 0.78 * a, 0.82 * a, 1.0},
    };
    c.horizon = 1.0;
    c.dt = 0.02;
    c.iterations = 1000;
    c.rollouts = 50;
    c.learn_rate = 1e-2;
    c.proximal_steps = 10;
    c.arch = Arch::Cnn;
    return c;
}

ExperimentConfig build_heat_1d_boundary() {
    ExperimentConfig c;
    c.name = "heat-1d-boundary";
    c.model.kind = SpdeKind::Heat1dBoundary;
    c.model.epsilon = 1.0;
    c.model.rho = 10.0;
    c.dim = 1;
    c.extent = 1.0;
    c.points = 64;
    c.actuation = ActuatorKind::BoundaryIndicator;
    c.kappa = 1e-3;
    c.regions = {{0.001, 0.999, 0, 0, 3.0}};
    c.horizon = 1.5;
    c.dt = 0.01;
    c.iterations = 1000;
    c.rollouts = 200;
    c.learn_rate = 1e-3;
    c.proximal_steps = 10;
    c.arch = Arch::Mlp;
    return c;
}

} // namespace

std::vector<std::string> preset_names() {
    return {"heat-1d", "burgers-1d", "nagumo-1d", "heat-2d", "heat-1d-boundary"};
}

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    if (name == "heat-1d") c = build_heat_1d();
    else if (name == "burgers-1d") c = build_burgers_1d();
    else if (name == "nagumo-1d") c = build_nagumo_1d();
    else if (name == "heat-2d") c = build_heat_2d();
    else if (name == "heat-1d-boundary") c = build_heat_1d_boundary();
    else throw std::invalid_argument("unknown preset: " + name);
    c.validate();
    return c;
}

} // namespace spde
