#pragma once

#include <stdexcept>
#include <string>

namespace rtsad {

// Base of every error the library throws. Callers that only care about
// "something failed" catch this; the subclasses name the failure class.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define RTSAD_DEFINE_ERROR(Name)          \
    class Name : public Error {           \
    public:                               \
        using Error::Error;               \
    }

RTSAD_DEFINE_ERROR(ArchitectureError);  // bad layer sizes
RTSAD_DEFINE_ERROR(ShapeError);         // dimension mismatch
RTSAD_DEFINE_ERROR(NumericError);       // non-finite values
RTSAD_DEFINE_ERROR(ParseError);         // unparseable cell / token
RTSAD_DEFINE_ERROR(FormatError);        // structurally malformed file
RTSAD_DEFINE_ERROR(ConfigError);        // invalid configuration values
RTSAD_DEFINE_ERROR(ContaminationError); // invalid contamination spec
RTSAD_DEFINE_ERROR(SplitError);         // too few windows to split
RTSAD_DEFINE_ERROR(TrainingError);      // empty mask / nothing to train on
RTSAD_DEFINE_ERROR(FilterError);        // discard set swallowed everything
RTSAD_DEFINE_ERROR(MetricError);        // metric undefined for the input

#undef RTSAD_DEFINE_ERROR

}  // namespace rtsad
