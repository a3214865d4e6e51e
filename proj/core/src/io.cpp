#include "pairdiff/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pairdiff/errors.hpp"

namespace pairdiff {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

double parse_field(std::string_view field, const std::string& path, std::size_t line,
                   std::size_t column) {
    double value = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(value))
        throw DataError(path + ":" + std::to_string(line) + ": column " + std::to_string(column) +
                        ": cannot parse '" + std::string(field) + "' as a finite number");
    return value;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r')
        s.pop_back();
    return s;
}

} // namespace

Dataset read_data_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line))
        throw DataError(path + ": empty file");
    line = strip_cr(line);

    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "y" || header[1] != "w")
        throw DataError(path + ":1: header must be y,w,x1,...,xp");
    const std::size_t p = header.size() - 2;
    for (std::size_t j = 0; j < p; ++j) {
        const std::string expect = "x" + std::to_string(j + 1);
        if (header[j + 2] != expect)
            throw DataError(path + ":1: column " + std::to_string(j + 3) + " must be named '" +
                            expect + "'");
    }

    std::vector<double> ys, ws, xs;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty())
            continue;
        const auto fields = split_csv(line);
        if (fields.size() != p + 2)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(p + 2) + " fields, found " + std::to_string(fields.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const double v = parse_field(fields[c], path, lineno, c + 1);
            if (c == 0)
                ys.push_back(v);
            else if (c == 1)
                ws.push_back(v);
            else
                xs.push_back(v);
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
    if (n < 2)
        throw DataError(path + ": need at least 2 data rows");

    Dataset data;
    data.Y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
    data.W = Eigen::Map<Eigen::VectorXd>(ws.data(), n);
    data.X.resize(n, static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            data.X(i, static_cast<Eigen::Index>(j)) = xs[static_cast<std::size_t>(i) * p + j];
    data.validate();
    return data;
}

void write_data_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << "y,w";
    for (Eigen::Index j = 0; j < data.p(); ++j)
        out << ",x" << (j + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << format_double(data.Y[i]) << ',' << format_double(data.W[i]);
        for (Eigen::Index j = 0; j < data.p(); ++j)
            out << ',' << format_double(data.X(i, j));
        out << "\n";
    }
}

std::string truth_path_for(const std::string& data_path) {
    constexpr std::string_view ext = ".csv";
    if (data_path.size() > ext.size() &&
        data_path.compare(data_path.size() - ext.size(), ext.size(), ext) == 0)
        return data_path.substr(0, data_path.size() - ext.size()) + ".truth.csv";
    return data_path + ".truth.csv";
}

void write_truth_csv(const std::string& path, const Dataset& data) {
    if (!data.beta_star || !data.g_values)
        throw DataError("dataset carries no truth to write");
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << "kind,index,value\n";
    for (Eigen::Index k = 0; k < data.beta_star->size(); ++k)
        out << "beta," << (k + 1) << ',' << format_double((*data.beta_star)[k]) << "\n";
    for (Eigen::Index i = 0; i < data.g_values->size(); ++i)
        out << "g," << (i + 1) << ',' << format_double((*data.g_values)[i]) << "\n";
}

void attach_truth_csv(const std::string& path, Dataset& data) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "kind,index,value")
        throw DataError(path + ":1: header must be kind,index,value");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.p());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(data.n());
    std::vector<char> beta_seen(static_cast<std::size_t>(data.p()), 0);
    std::vector<char> g_seen(static_cast<std::size_t>(data.n()), 0);

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty())
            continue;
        const auto fields = split_csv(line);
        if (fields.size() != 3)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
        const double idx_val = parse_field(fields[1], path, lineno, 2);
        const double value = parse_field(fields[2], path, lineno, 3);
        const auto idx = static_cast<Eigen::Index>(idx_val);
        if (fields[0] == "beta") {
            if (idx < 1 || idx > data.p())
                throw DataError(path + ":" + std::to_string(lineno) + ": beta index out of range");
            beta[idx - 1] = value;
            beta_seen[static_cast<std::size_t>(idx - 1)] = 1;
        } else if (fields[0] == "g") {
            if (idx < 1 || idx > data.n())
                throw DataError(path + ":" + std::to_string(lineno) + ": g index out of range");
            g[idx - 1] = value;
            g_seen[static_cast<std::size_t>(idx - 1)] = 1;
        } else {
            throw DataError(path + ":" + std::to_string(lineno) + ": kind must be beta or g");
        }
    }
    for (char seen : beta_seen)
        if (!seen)
            throw DataError(path + ": incomplete beta rows");
    for (char seen : g_seen)
        if (!seen)
            throw DataError(path + ": incomplete g rows");
    data.beta_star = std::move(beta);
    data.g_values = std::move(g);
}

Eigen::VectorXd ModelFile::dense_beta() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
    Eigen::Index prev = 0;
    for (const auto& [idx, value] : beta) {
        if (idx <= prev || idx > p)
            throw DataError("model beta indices must be strictly increasing in 1..p");
        out[idx - 1] = value;
        prev = idx;
    }
    return out;
}

void write_model_json(const std::string& path, const ModelFile& model) {
    nlohmann::json j;
    j["method"] = model.method;
    j["kernel"] = model.kernel;
    j["h"] = model.h;
    j["lambda"] = model.lambda;
    j["n"] = model.n;
    j["p"] = model.p;
    auto beta = nlohmann::json::array();
    for (const auto& [idx, value] : model.beta)
        beta.push_back({idx, value});
    j["beta"] = beta;
    j["timestamp"] = model.timestamp;
    j["config"] = model.config_echo;

    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

ModelFile read_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    ModelFile m;
    try {
        m.method = j.at("method").get<std::string>();
        m.kernel = j.at("kernel").get<std::string>();
        m.h = j.at("h").get<double>();
        m.lambda = j.at("lambda").get<double>();
        m.n = j.at("n").get<Eigen::Index>();
        m.p = j.at("p").get<Eigen::Index>();
        for (const auto& entry : j.at("beta"))
            m.beta.emplace_back(entry.at(0).get<Eigen::Index>(), entry.at(1).get<double>());
        m.timestamp = j.value("timestamp", "");
        if (j.contains("config"))
            for (const auto& [key, value] : j.at("config").items())
                m.config_echo[key] = value.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return m;
}

} // namespace pairdiff
