#include "pqsp/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "pqsp/errors.hpp"

namespace pqsp {

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{})
        throw ConfigError("serialize: malformed number '" + s + "'");
    return v;
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("serialize: cannot open " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json grid_to_json(const RadialGrid& grid) {
    nlohmann::json j;
    j["R"] = grid.R();
    j["n"] = grid.size();
    j["grading"] = grid.grading().name();
    j["ratio"] = grid.grading().ratio;
    return j;
}

GridPtr grid_from_json(const nlohmann::json& j) {
    GradingSpec g;
    if (j.value("grading", "uniform") == std::string("geometric"))
        g = GradingSpec::geometric(j.at("ratio").get<double>());
    return RadialGrid::make(j.at("R").get<double>(),
                            j.at("n").get<std::size_t>(), g);
}

nlohmann::json profile_to_json(const Profile& p) {
    nlohmann::json j;
    j["kind"] = p.name();
    j["amplitude"] = p.amplitude;
    j["a"] = p.a;
    return j;
}

Profile profile_from_json(const nlohmann::json& j) {
    Profile p;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian")
        p.kind = Profile::Kind::Gaussian;
    else if (kind == "bump")
        p.kind = Profile::Kind::Bump;
    else
        throw ConfigError("serialize: unknown profile kind '" + kind + "'");
    p.amplitude = j.value("amplitude", 1.0);
    p.a = j.value("a", 1.0);
    if (!(p.a > 0.0)) throw ConfigError("serialize: profile needs a > 0");
    return p;
}

void write_field_csv(const std::filesystem::path& path, const RadialField& f,
                     const nlohmann::json* extra_metadata) {
    std::ostringstream os;
    os << "r,value\n";
    const auto& nodes = f.grid()->nodes();
    for (std::size_t i = 0; i < f.size(); ++i)
        os << format_double(nodes[i]) << ',' << format_double(f[i]) << '\n';
    write_text_atomic(path, os.str());

    nlohmann::json side;
    side["grid"] = grid_to_json(*f.grid());
    side["profile"] =
        f.profile() ? profile_to_json(*f.profile()) : nlohmann::json(nullptr);
    if (extra_metadata) side["meta"] = *extra_metadata;
    auto sp = path;
    sp += ".json";
    write_text_atomic(sp, side.dump(2) + "\n");
}

RadialField read_field_csv(const std::filesystem::path& path) {
    auto sp = path;
    sp += ".json";
    std::ifstream sf(sp);
    if (!sf) throw ConfigError("serialize: missing sidecar " + sp.string());
    nlohmann::json side = nlohmann::json::parse(sf);
    auto grid = grid_from_json(side.at("grid"));
    std::optional<Profile> prof;
    if (!side.at("profile").is_null())
        prof = profile_from_json(side.at("profile"));

    std::ifstream in(path);
    if (!in) throw ConfigError("serialize: missing field file " + path.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> values;
    values.reserve(grid->size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("serialize: malformed row '" + line + "'");
        values.push_back(parse_double(line.substr(comma + 1)));
    }
    if (values.size() != grid->size())
        throw ConfigError("serialize: row count does not match grid");
    return RadialField(grid, std::move(values), prof);
}

}  // namespace pqsp
