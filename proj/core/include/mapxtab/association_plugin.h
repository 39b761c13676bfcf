/* C ABI for externally supplied association formulas. A plugin is a shared
   object exporting `mapxtab_association`; it returns a value in [0, 1], or a
   negative number to signal that the input is outside its domain. */
#ifndef MAPXTAB_ASSOCIATION_PLUGIN_H
#define MAPXTAB_ASSOCIATION_PLUGIN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mapxtab_association_input {
  size_t rows;                  /* test classes */
  size_t cols;                  /* reference classes */
  const uint64_t* counts;       /* rows*cols, row-major */
  const unsigned char* related; /* rows*cols, 1 where the pair is in the relation */
  uint64_t valid_total;
} mapxtab_association_input;

typedef double (*mapxtab_association_fn)(const mapxtab_association_input*);

#define MAPXTAB_ASSOCIATION_SYMBOL "mapxtab_association"

#ifdef __cplusplus
}
#endif

#endif
