// include/ovr/cli.hpp

// Copyright 2026  OVR-Lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OVR_CLI_HPP_
#define OVR_CLI_HPP_

#include <string>
#include <vector>

namespace ovr {

// Subcommand front door. Returns the process exit code; errors are
// reported as a single "error: ..." line on stderr.
int dispatch(const std::vector<std::string>& args);

}  // namespace ovr

#endif  // OVR_CLI_HPP_
