#pragma once

#include <stdexcept>
#include <string>

namespace graphscore {

// Machine-checkable failure categories. Tests assert on these rather than
// on message text.
enum class Errc {
    InvalidArgument,
    EmptyEdgeList,
    KindMismatch,
    NodeOutOfRange,
    NotBipartite,
    NonConvergence,
    ZeroSpectralRadius,
    SingleClassLabels,
    NonFiniteFeature,
    SchemaMismatch,
    ShapeMismatch,
    EmptyMask,
    TrainingDiverged,
    DegenerateCost,
    IoError,
    ParseError,
    MissingManifest,
    ColumnMismatch,
    UnknownRelationKind,
    ConfigInvalid,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace graphscore
