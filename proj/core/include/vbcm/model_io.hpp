#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "vbcm/mlp.hpp"
#include "vbcm/models.hpp"

namespace vbcm {

inline constexpr int kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Which estimator produced a model file.
enum class Estimator { Standard, Regression };

struct ModelFile {
    ParamStore params;
    Estimator estimator = Estimator::Standard;
    std::optional<Mlp> mlp;
};

/// Versioned JSON with sorted object keys and table rows sorted by key, so
/// equal models serialise to identical bytes. Ends with a newline.
std::string model_to_json(const ModelFile& m);
/// Throws ModelFormatError on malformed input or a version other than
/// kModelFormatVersion.
ModelFile model_from_json(std::string_view text);

void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

}  // namespace vbcm
