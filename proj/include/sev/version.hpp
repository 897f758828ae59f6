#pragma once

#define SEV_VERSION_MAJOR 0
#define SEV_VERSION_MINOR 1
#define SEV_VERSION_PATCH 0
#define SEV_VERSION_STRING "0.1.0"
