#pragma once

#include <string>
#include <string_view>

#include <Eigen/Core>

#include "xpm/bayes.hpp"
#include "xpm/config.hpp"
#include "xpm/contrast.hpp"
#include "xpm/dataset.hpp"
#include "xpm/dynamic.hpp"
#include "xpm/quantile.hpp"
#include "xpm/simgen.hpp"

namespace xpm {

inline constexpr std::string_view kEngineName = "xpm";
inline constexpr std::string_view kEngineVersion = "1.0.0";

ojson vector_json(const Eigen::VectorXd& v);
ojson matrix_json(const Eigen::MatrixXd& m);

ojson to_json(const EffectEstimate& e);
ojson to_json(const QuantileEffect& e);
ojson to_json(const BalanceCheck& b);
ojson to_json(const DynamicEffects& d);
ojson to_json(const ValidationReport& r);
ojson to_json(const SimTruth& t);
ojson to_json(const CoverageReport& c);

/// Serialised report: two-space indentation, insertion-ordered keys,
/// shortest round-trip doubles, trailing newline.
std::string render_json(const ojson& j);

/// Plain-text digest of an analysis report for terminals.
std::string summary_text(const ojson& report);

}  // namespace xpm
