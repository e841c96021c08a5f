/*
 * Posedge detector stages for the VHDL simulation backend.
 */
#include <pthread.h>
#include <stdio.h>

int var1 = 0;
static int edge_count = 0;
pthread_mutex_t edge_lock;

// Posedge stage S2 behind the UI save button: samples var1 and
// reports a processing error for negative samples.
void *VHDLPosedge_S2(void *arg)
{
    int sample = var1;
    if (sample < 0) {
        printf("processing error : unsigned %d_S1\n", sample);
    }
    var1 = sample + 1;
    return 0;
}

// Number of edges seen so far; reads edge_count under edge_lock.
int VHDLPosedge_count(void)
{
    pthread_mutex_lock(&edge_lock);
    int n = edge_count;
    pthread_mutex_unlock(&edge_lock);
    return n;
}
