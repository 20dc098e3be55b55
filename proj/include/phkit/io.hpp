#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "phkit/dirac.hpp"
#include "phkit/energyport.hpp"
#include "phkit/error.hpp"
#include "phkit/model.hpp"
#include "phkit/netbuild.hpp"

namespace phkit::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolName = "phkit";
inline constexpr const char* kVersion = "0.1.0";

// Malformed document; `path` is a JSON pointer to the offending value.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& message)
      : Error("schema error at " + (path.empty() ? std::string("/") : path) + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// A model parsed fine but failed its structural checks.
class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(ValidationReport report)
      : Error("model failed validation"), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// One model file: kind "phs" (optionally with an "extended" block of P, M,
// S), "iohs" or "msd-graph".
struct ModelFile {
  std::string kind;
  std::optional<PhsModel> phs;
  std::optional<ExtendedPhsModel> extended;
  std::optional<IohModel> ioh;
  std::optional<MsdGraph> graph;

  // The PHS form: the model itself, the assembled network, or the
  // extended PHS of an IOH model.
  PhsModel as_phs() const;
};

Json read_json_file(const std::string& path);

// Parses and validates eagerly (ValidationFailure on failed checks).
ModelFile parse_model(const Json& doc, std::uint64_t seed = kDefaultSeed);
ModelFile load_model(const std::string& path, std::uint64_t seed = kDefaultSeed);

PhsModel phs_from_json(const Json& doc, const std::string& path = "");
IohModel ioh_from_json(const Json& doc, const std::string& path = "");
MsdGraph msd_from_json(const Json& doc, const std::string& path = "");

Json to_json(const PhsModel& model);
Json to_json(const ExtendedPhsModel& model);
Json to_json(const IohModel& model);
Json to_json(const MsdGraph& graph);

Json matrix_json(const Eigen::MatrixXd& m);
Json vector_json(const Eigen::VectorXd& v);
Json field_json(const MatrixField& f);
Json hamiltonian_json(const Hamiltonian& h, const std::vector<std::string>& state);

// Matrix of numbers only (rows x cols unless -1).
Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& path, Eigen::Index rows = -1,
                                 Eigen::Index cols = -1);

// Dirac document: {"ports": [{"name", "dim"}], then "F" and "E", or "skew",
// or "kirchhoff" (basis columns)}.
DiracStructure dirac_from_json(const Json& doc, const std::string& path = "");
Json to_json(const DiracStructure& d);

Json check_json(const Check& c);
Json checks_json(const ValidationReport& r);

// {"tool", "version", "seed", "checks"} plus any extra members of `body`.
Json report(const std::string& command, std::uint64_t seed, Json checks, const Json& body = Json::object());

}  // namespace phkit::io
