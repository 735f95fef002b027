#pragma once
// Exception types shared by all modules.

#include <stdexcept>
#include <string>

namespace nlreg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define NLREG_ERROR(Name)                      \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    };

NLREG_ERROR(ArgumentError)
NLREG_ERROR(ParameterError)
NLREG_ERROR(KernelEvalError)
NLREG_ERROR(ModeError)
NLREG_ERROR(EvaluationError)
NLREG_ERROR(AccuracyError)
NLREG_ERROR(IntegrationError)
NLREG_ERROR(SpecError)
NLREG_ERROR(SearchFailure)
NLREG_ERROR(VerificationFailure)
NLREG_ERROR(StepError)
NLREG_ERROR(DomainError)
NLREG_ERROR(DataError)

#undef NLREG_ERROR

}  // namespace nlreg
