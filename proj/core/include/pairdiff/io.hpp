#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pairdiff/dataset.hpp"

namespace pairdiff {

// 17-significant-digit decimal serialization; round-trips doubles exactly.
std::string format_double(double v);

// CSV with header y,w,x1,...,xp; comma separated, decimal point, no
// missing values. Parse errors report line and column.
Dataset read_data_csv(const std::string& path);
void write_data_csv(const std::string& path, const Dataset& data);

// Truth sidecar (kind,index,value): `beta` rows 1..p, then `g` rows 1..n.
void write_truth_csv(const std::string& path, const Dataset& data);
void attach_truth_csv(const std::string& path, Dataset& data);

// data.csv -> data.truth.csv
std::string truth_path_for(const std::string& data_path);

// Fitted model on disk: sparse coefficients with strictly increasing
// 1-based indices. The timestamp stays empty unless the caller asks for
// one, so repeated runs produce byte-identical files.
struct ModelFile {
    std::string method = "prd";
    std::string kernel = "box";
    double h = 0.0;
    double lambda = 0.0;
    Eigen::Index n = 0, p = 0;
    std::vector<std::pair<Eigen::Index, double>> beta;
    std::string timestamp;
    std::map<std::string, std::string> config_echo;

    Eigen::VectorXd dense_beta() const;
};

void write_model_json(const std::string& path, const ModelFile& model);
ModelFile read_model_json(const std::string& path);

} // namespace pairdiff
