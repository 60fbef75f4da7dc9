#pragma once

#include <stdexcept>
#include <string>

namespace kbprobe {

// Base for everything thrown by this library. Callers that only want to tell
// "bad input" from "the world misbehaved" can catch config_error vs
// transport_error; the CLI maps these onto exit codes.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, CLI arguments, or preset names.
class config_error : public error {
 public:
  using error::error;
};

// Violated call contract (empty text, missing embedding, bad pool, ...).
class precondition_error : public error {
 public:
  using error::error;
};

// Disallowed atom lifecycle edge.
class illegal_transition_error : public precondition_error {
 public:
  using precondition_error::precondition_error;
};

// Network-level failure: unreachable host, timeout, or a retryable HTTP
// status that survived all retry attempts. Retryable during the attempt loop.
class transport_error : public error {
 public:
  using error::error;
};

class rate_limit_error : public transport_error {
 public:
  using transport_error::transport_error;
};

class server_error : public transport_error {
 public:
  using transport_error::transport_error;
};

// 401/403. Never retried.
class auth_error : public error {
 public:
  using error::error;
};

// Response arrived but could not be interpreted (bad JSON, missing fields,
// wrong embedding dimensions).
class malformed_response_error : public error {
 public:
  using error::error;
};

class dimension_mismatch_error : public malformed_response_error {
 public:
  using malformed_response_error::malformed_response_error;
};

// A node could not be grown to the requested branching factor.
class taxonomy_induction_error : public error {
 public:
  using error::error;
};

// The persona roster could not be brought to the requested size.
class profile_generation_error : public error {
 public:
  using error::error;
};

// A borderline duplicate could not be adjudicated even after deferral.
class adjudication_error : public error {
 public:
  using error::error;
};

// An atom outside the union was passed to a recall computation, or a
// simulated-corpus lookup was asked about text it never produced.
class foreign_atom_error : public precondition_error {
 public:
  using precondition_error::precondition_error;
};

// Replay of a stored run diverged from the recorded decisions.
class verification_error : public error {
 public:
  using error::error;
};

}  // namespace kbprobe
