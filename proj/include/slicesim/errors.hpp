#pragma once

#include <stdexcept>
#include <string>

namespace slicesim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// sim-core
struct ScheduleError : SimError { using SimError::SimError; };
struct EventError : SimError { using SimError::SimError; };
struct InvariantViolation : SimError { using SimError::SimError; };

// radio-grid
struct OverlapError : SimError { using SimError::SimError; };
struct BoundsError : SimError { using SimError::SimError; };
struct ConflictError : SimError { using SimError::SimError; };
struct CapacityError : SimError { using SimError::SimError; };
struct UnknownSliceError : SimError { using SimError::SimError; };

// cn-slice
struct NoPathError : SimError { using SimError::SimError; };

// offload
struct DigestMismatchError : SimError { using SimError::SimError; };
struct LinkDownError : SimError { using SimError::SimError; };
struct SessionError : SimError { using SimError::SimError; };

// cli
struct ScenarioError : SimError { using SimError::SimError; };

}  // namespace slicesim
