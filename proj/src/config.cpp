#include "cgsta/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cgsta::config {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_f(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct KeyDef {
    std::string full;  // section.key
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

double parse_f(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        fail("cannot parse value '" + v + "' for " + key);
    }
}

std::uint64_t parse_u(const std::string& v, const std::string& key) {
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) fail("cannot parse value '" + v + "' for " + key);
    return x;
}

bool parse_b(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("cannot parse boolean '" + v + "' for " + key);
}

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = [] {
        std::vector<KeyDef> t;
        auto f = [&t](const char* full, auto member) {
            t.push_back({full,
                         [member, full](Config& c, const std::string& v) {
                             c.*member = parse_f(v, full);
                         },
                         [member](const Config& c) { return fmt_f(c.*member); }});
        };
        auto u = [&t](const char* full, auto member) {
            t.push_back({full,
                         [member, full](Config& c, const std::string& v) {
                             c.*member = static_cast<std::size_t>(parse_u(v, full));
                         },
                         [member](const Config& c) { return std::to_string(c.*member); }});
        };
        u("model.d_e", &Config::d_e);
        u("model.d_u", &Config::d_u);
        u("model.d_a", &Config::d_a);
        u("model.f_in", &Config::f_in);
        u("model.h", &Config::h);
        u("model.h_t", &Config::h_t);
        u("model.h_f", &Config::h_f);
        u("model.d_g", &Config::d_g);
        u("model.r", &Config::r);
        u("model.g", &Config::g);
        f("model.tau", &Config::tau);
        f("model.tau_assign", &Config::tau_assign);
        f("model.lambda_soft", &Config::lambda_soft);
        f("model.logvar_clamp", &Config::logvar_clamp);
        f("train.alpha", &Config::alpha);
        f("train.beta", &Config::beta);
        f("train.gamma", &Config::gamma);
        f("train.lr", &Config::lr);
        f("train.clip_norm", &Config::clip_norm);
        u("train.batch", &Config::batch);
        u("train.epochs", &Config::epochs);
        u("train.patience", &Config::patience);
        t.push_back({"train.seed",
                     [](Config& c, const std::string& v) { c.seed = parse_u(v, "train.seed"); },
                     [](const Config& c) { return std::to_string(c.seed); }});
        t.push_back({"train.variant",
                     [](Config& c, const std::string& v) { c.variant = variant_from_string(v); },
                     [](const Config& c) { return variant_to_string(c.variant); }});
        f("train.aug_point_magnitude", &Config::aug_point_magnitude);
        f("train.aug_point_fraction", &Config::aug_point_fraction);
        f("train.aug_replace_len_fraction", &Config::aug_replace_len_fraction);
        f("train.aug_drift_magnitude", &Config::aug_drift_magnitude);
        f("train.aug_w_point", &Config::aug_w_point);
        f("train.aug_w_context", &Config::aug_w_context);
        f("train.aug_w_drift", &Config::aug_w_drift);
        u("data.window", &Config::window);
        u("data.stride", &Config::stride);
        u("data.stride_test", &Config::stride_test);
        t.push_back({"data.label_column",
                     [](Config& c, const std::string& v) { c.label_column = v; },
                     [](const Config& c) { return c.label_column; }});
        t.push_back({"data.has_header",
                     [](Config& c, const std::string& v) {
                         c.has_header = parse_b(v, "data.has_header");
                     },
                     [](const Config& c) { return c.has_header ? std::string("true")
                                                               : std::string("false"); }});
        return t;
    }();
    return table;
}

const KeyDef* find_key(const std::string& full) {
    for (const auto& k : key_table())
        if (k.full == full) return &k;
    return nullptr;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_saa") return Variant::no_saa;
    if (s == "no_cds") return Variant::no_cds;
    if (s == "no_dlgc") return Variant::no_dlgc;
    fail("unknown variant '" + s + "' (expected full|no_saa|no_cds|no_dlgc)");
}

std::string variant_to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_saa: return "no_saa";
        case Variant::no_cds: return "no_cds";
        case Variant::no_dlgc: return "no_dlgc";
    }
    return "full";
}

void Config::validate() const {
    if (alpha < 0 || beta < 0) fail("alpha and beta must be non-negative");
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0,1)");
    if (tau <= 0 || tau_assign <= 0) fail("temperatures must be positive");
    if (!(lambda_soft >= 0.0 && lambda_soft <= 1.0)) fail("lambda_soft must lie in [0,1]");
    if (batch < 2) fail("batch must be >= 2 (the contrastive terms need pairs)");
    if (window < 4) fail("window must be >= 4");
    if (stride == 0 || stride_test == 0) fail("strides must be positive");
    if (epochs == 0) fail("epochs must be positive");
    if (d_e == 0 || d_u == 0 || d_a == 0 || f_in == 0 || h == 0 || h_t == 0 || h_f == 0 ||
        d_g == 0 || r == 0 || g == 0)
        fail("all model dimensions must be >= 1");
    if (g >= r) fail("g must be < r");
    if (lr <= 0) fail("lr must be positive");
}

Config parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail("malformed section header at line " + std::to_string(line_no));
            section = trim(s.substr(1, s.size() - 2));
            if (section != "model" && section != "train" && section != "data")
                fail("unknown section [" + section + "] at line " + std::to_string(line_no));
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail("expected key = value at line " + std::to_string(line_no));
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        std::size_t hash = value.find('#');
        if (hash != std::string::npos) value = trim(value.substr(0, hash));
        if (section.empty()) fail("key outside a section at line " + std::to_string(line_no));
        const KeyDef* def = find_key(section + "." + key);
        if (!def) fail("unknown key '" + key + "' in section [" + section + "]");
        def->set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

Config parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

std::string flatten(const Config& cfg) {
    std::string out;
    for (const auto& k : key_table()) {
        if (!out.empty()) out += ' ';
        out += k.full + "=" + k.get(cfg);
    }
    return out;
}

Config from_flat(const std::string& flat) {
    Config cfg;
    std::istringstream in(flat);
    std::string token;
    while (in >> token) {
        std::size_t eq = token.find('=');
        if (eq == std::string::npos) fail("malformed checkpoint config token '" + token + "'");
        const std::string full = token.substr(0, eq);
        const KeyDef* def = find_key(full);
        if (!def) fail("unknown checkpoint config key '" + full + "'");
        def->set(cfg, token.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

}  // namespace cgsta::config
